mod common;

use std::sync::Arc;

use common::rng;
use imagenav_core::sim::{
    compute_reward, depth_rays, generate_world, geodesic_distance, integrate, is_stop, render, wrap_angle, Action,
    AgentState, Aabb, CameraConfig, EnvConfig, NavEnv, Obstacle, Pose, Profile, RewardParams, Rgb, Shape, Vec2,
    WallSegment, WorldMap, STOP_V_ANG_DEG, STOP_V_LIN,
};
use proptest::prelude::*;
use rand::Rng;

fn state(x: f64, y: f64, heading: f64) -> AgentState {
    AgentState {
        position: Vec2::new(x, y),
        heading,
        time_step: 0,
    }
}

fn flood_fill_components(world: &WorldMap) -> usize {
    let g = world.grid();
    let mut seen = vec![false; g.cols * g.rows];
    let mut count = 0;
    for c0 in 0..g.cols {
        for r0 in 0..g.rows {
            if g.is_occupied(c0, r0) || seen[r0 * g.cols + c0] {
                continue;
            }
            count += 1;
            let mut stack = vec![(c0, r0)];
            seen[r0 * g.cols + c0] = true;
            while let Some((c, r)) = stack.pop() {
                let near = [(c.wrapping_sub(1), r), (c + 1, r), (c, r.wrapping_sub(1)), (c, r + 1)];
                for (nc, nr) in near {
                    if nc < g.cols && nr < g.rows && !g.is_occupied(nc, nr) && !seen[nr * g.cols + nc] {
                        seen[nr * g.cols + nc] = true;
                        stack.push((nc, nr));
                    }
                }
            }
        }
    }
    count
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(generate_world(42, Profile::Sparse).unwrap(), generate_world(42, Profile::Sparse).unwrap());
}

#[test]
fn poles_are_circles_in_a_ten_metre_arena() {
    let w = generate_world(1, Profile::Poles).unwrap();
    assert!((6..=12).contains(&w.obstacles.len()));
    for o in &w.obstacles {
        match o.shape {
            Shape::Circle { radius, .. } => assert!((0.15..=0.3).contains(&radius)),
            other => panic!("non-circular obstacle {other:?}"),
        }
    }
    assert_eq!((w.bounds.width(), w.bounds.height()), (10.0, 10.0));
}

#[test]
fn cluttered_seed_seven_is_one_component() {
    let w = generate_world(7, Profile::Cluttered).unwrap();
    assert_eq!(flood_fill_components(&w), 1);
}

#[test]
fn obstacles_lie_inside_bounds() {
    for seed in 0..20 {
        for p in [Profile::Sparse, Profile::Cluttered, Profile::Poles] {
            let w = generate_world(seed, p).unwrap();
            for o in &w.obstacles {
                let bb = o.shape.bounding_box();
                assert!(bb.min.x > w.bounds.min.x && bb.min.y > w.bounds.min.y);
                assert!(bb.max.x < w.bounds.max.x && bb.max.y < w.bounds.max.y);
            }
            assert_eq!(flood_fill_components(&w), 1, "seed {seed} {p:?}");
        }
    }
}

#[test]
fn full_speed_advances_two_and_a_half_centimetres() {
    let w = WorldMap::open(10.0, 10.0);
    let (s, c) = integrate(&state(5.0, 5.0, 0.0), &Action::new(0.25, 0.0), &w, 0.1);
    assert!(!c);
    assert_eq!(s.position.x, 5.0 + 0.25 * 0.1);
    assert_eq!(s.position.y, 5.0);
}

#[test]
fn turning_in_place_adds_one_and_a_half_degrees() {
    let w = WorldMap::open(10.0, 10.0);
    let (s, _) = integrate(&state(5.0, 5.0, 0.0), &Action::new(0.0, 15f64.to_radians()), &w, 0.1);
    assert!((s.heading.to_degrees() - 1.5).abs() < 1e-12);
    assert_eq!(s.position, Vec2::new(5.0, 5.0));
}

#[test]
fn driving_into_a_wall_collides_and_stays_free() {
    let w = WorldMap::open(10.0, 10.0);
    // inflated boundary sits at x = 9.85
    let (s, c) = integrate(&state(9.84, 5.0, 0.0), &Action::new(0.25, 0.0), &w, 0.1);
    assert!(c);
    assert!(w.is_free(s.position));
}

#[test]
fn sliding_preserves_the_tangential_component() {
    let w = WorldMap::open(10.0, 10.0);
    let theta = 30f64.to_radians();
    let (s, c) = integrate(&state(9.84, 5.0, theta), &Action::new(0.25, 0.0), &w, 0.1);
    assert!(c);
    assert!((s.position.y - (5.0 + 0.025 * theta.sin())).abs() < 1e-9);
    assert!(s.position.x <= 9.85 + 1e-9);
}

#[test]
fn sliding_fuzz_keeps_the_agent_in_free_space() {
    let mut r = rng(3);
    for seed in 0..4 {
        let w = generate_world(seed, Profile::Cluttered).unwrap();
        let mut s = AgentState {
            position: imagenav_core::sim::sample_free_pose(&w, &mut r).unwrap().position,
            heading: 0.0,
            time_step: 0,
        };
        for _ in 0..25_000 {
            let a = Action::new(r.random_range(0.0..0.25), r.random_range(-0.27..0.27));
            // bias forward motion so contacts are frequent
            let a = if r.random_bool(0.8) { Action::new(0.25, a.v_ang) } else { a };
            s = integrate(&s, &a, &w, 0.1).0;
            assert!(w.is_free(s.position), "left free space at {:?}", s.position);
            assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
        }
    }
}

#[test]
fn identical_actions_give_identical_trajectories() {
    let w = Arc::new(generate_world(5, Profile::Sparse).unwrap());
    let run = || {
        let mut env = NavEnv::new(Arc::clone(&w), EnvConfig::default());
        let mut r = rng(9);
        let (start, goal, _) = imagenav_core::sim::sample_start_goal(&w, (1.5, 3.0), &mut r).unwrap();
        env.reset(start, goal).unwrap();
        let mut out = Vec::new();
        while !env.is_done() {
            let res = env.step(&Action::new(r.random_range(0.05..0.25), r.random_range(-0.2..0.2))).unwrap();
            out.push((env.state().position.x.to_bits(), env.state().position.y.to_bits(), res.reward.to_bits()));
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn reward_examples() {
    let p = RewardParams::default();
    assert!((compute_reward(1.9, 2.0, 90.0, &p) - 0.09).abs() < 1e-12);
    assert!((compute_reward(0.5, 0.5, 10.0, &p) - 2.49).abs() < 1e-12);
    assert!((compute_reward(5.0, 5.0, 180.0, &p) + 0.01).abs() < 1e-12);
}

#[test]
fn approach_terms_telescope() {
    let w = Arc::new(WorldMap::open(10.0, 10.0));
    let mut r = rng(11);
    for _ in 0..20 {
        let mut env = NavEnv::new(Arc::clone(&w), EnvConfig::default());
        env.reset(Pose::new(2.0, 5.0, r.random_range(-3.0..3.0)), Pose::new(8.5, 5.0, 0.0)).unwrap();
        let d0 = env.distance_to_goal().unwrap();
        let mut sum = 0.0;
        for _ in 0..100 {
            let res = env.step(&Action::new(r.random_range(0.03..0.25), r.random_range(-0.26..0.26))).unwrap();
            assert!(!res.collision && !res.info.success);
            sum += res.reward + 0.01;
            if res.done {
                break;
            }
        }
        let dt = env.distance_to_goal().unwrap();
        assert!((sum - (d0 - dt)).abs() < 1e-9, "{sum} vs {}", d0 - dt);
    }
}

#[test]
fn stop_thresholds() {
    let deg = |d: f64| d.to_radians();
    assert!(is_stop(&Action::new(0.02, deg(1.0))));
    assert!(!is_stop(&Action::new(0.2, 0.0)));
    assert!(!is_stop(&Action::new(0.0, deg(1.5))));
}

proptest! {
    #[test]
    fn stop_is_the_strict_conjunction(v in 0.0f64..0.25, w in -0.27f64..0.27) {
        let a = Action::new(v, w);
        let expected = a.v_lin < STOP_V_LIN && a.v_ang.abs() < STOP_V_ANG_DEG.to_radians();
        prop_assert_eq!(is_stop(&a), expected);
    }

    #[test]
    fn heading_stays_wrapped(h0 in -3.14f64..3.14, turns in prop::collection::vec(-0.27f64..0.27, 1..400)) {
        let w = WorldMap::open(10.0, 10.0);
        let mut s = state(5.0, 5.0, h0);
        for t in turns {
            s = integrate(&s, &Action::new(0.0, t), &w, 0.1).0;
            prop_assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
        }
    }

    #[test]
    fn wrap_angle_range(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let k = (a - w) / std::f64::consts::TAU;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn normalized_round_trip(v in 0.0f64..=0.25, w in -0.2617f64..=0.2617) {
        let a = Action::new(v, w);
        let back = a.normalized().physical();
        prop_assert!((back.v_lin - a.v_lin).abs() <= 1e-12);
        prop_assert!((back.v_ang - a.v_ang).abs() <= 1e-12);
    }
}

#[test]
fn empty_world_rays_hit_max_range() {
    let bounds = Aabb::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0));
    let w = WorldMap::new(0, None, bounds, Vec::new(), Vec::new());
    let d = depth_rays(&w, &Pose::new(0.0, 0.0, 0.3), &CameraConfig::default());
    assert_eq!(d.len(), 64);
    assert!(d.iter().all(|&v| v == 3.0));
}

#[test]
fn wall_one_metre_ahead() {
    let bounds = Aabb::new(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0));
    let wall = WallSegment {
        a: Vec2::new(1.0, -2.0),
        b: Vec2::new(1.0, 2.0),
        color: Rgb([1.0, 0.0, 0.0]),
    };
    let w = WorldMap::new(0, None, bounds, Vec::new(), vec![wall]);
    let cam = CameraConfig::default();
    let d = depth_rays(&w, &Pose::new(0.0, 0.0, 0.0), &cam);
    // oracle: perpendicular distance over the cosine of each ray's offset
    for (i, &v) in d.iter().enumerate() {
        let off = imagenav_core::sim::render::ray_angle(0.0, i, &cam);
        assert!((v - (1.0 / off.cos()).min(3.0)).abs() < 1e-6, "ray {i}: {v}");
    }
    let centre = d.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((centre - 1.0).abs() < 1e-3);
}

#[test]
fn render_is_deterministic_and_in_range() {
    let w = generate_world(4, Profile::Cluttered).unwrap();
    let pose = imagenav_core::sim::sample_free_pose(&w, &mut rng(1)).unwrap();
    let cam = CameraConfig::default();
    let a = render(&w, &pose, &cam);
    assert_eq!(a, render(&w, &pose, &cam));
    assert_eq!((a.0.channels, a.0.height, a.0.width), (3, 16, 64));
    assert!(a.0.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(a.1.iter().all(|&v| (0.0..=3.0).contains(&v)));
}

#[test]
fn goal_image_is_constant_within_an_episode() {
    let w = Arc::new(generate_world(2, Profile::Sparse).unwrap());
    let mut env = NavEnv::new(Arc::clone(&w), EnvConfig::default());
    let mut r = rng(2);
    let (s, g, _) = imagenav_core::sim::sample_start_goal(&w, (1.5, 3.0), &mut r).unwrap();
    let g0 = env.reset(s, g).unwrap().goal;
    for _ in 0..30 {
        let o = env.step(&Action::new(0.2, 0.1)).unwrap().observation;
        assert_eq!(*o.goal, *g0);
    }
}

#[test]
fn geodesic_examples() {
    let w = WorldMap::open(10.0, 10.0);
    let p = Vec2::new(3.0, 5.0);
    assert_eq!(geodesic_distance(p, p, &w).unwrap(), 0.0);
    let d = geodesic_distance(p, Vec2::new(5.0, 5.0), &w).unwrap();
    assert!((d - 2.0).abs() <= 0.08 * 2.0, "{d}");

    // a full-height divider splits the arena in two
    let bounds = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0));
    let divider = Obstacle {
        shape: Shape::Rect(Aabb::new(Vec2::new(4.9, -1.0), Vec2::new(5.1, 11.0))),
        color: Rgb([0.5, 0.5, 0.5]),
    };
    let split = WorldMap::new(0, None, bounds, vec![divider], Vec::new());
    let d = geodesic_distance(Vec2::new(2.0, 5.0), Vec2::new(8.0, 5.0), &split).unwrap();
    assert!(d.is_infinite());
}

#[test]
fn success_flag_implies_the_success_region() {
    let w = Arc::new(WorldMap::open(10.0, 10.0));
    let mut env = NavEnv::new(Arc::clone(&w), EnvConfig::default());
    env.reset(Pose::new(4.0, 5.0, 0.0), Pose::new(5.5, 5.0, 0.2)).unwrap();
    let mut hit = false;
    for _ in 0..100 {
        let res = env.step(&Action::new(0.25, 0.0)).unwrap();
        if res.info.success {
            assert!(res.info.distance <= 1.0 && res.info.heading_error_deg <= 25.0);
            hit = true;
        }
        if res.done {
            break;
        }
    }
    assert!(hit);
}
