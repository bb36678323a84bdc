mod common;

use std::sync::Arc;

use common::rng;
use imagenav_core::eval::plots::{curves_csv, read_series, trajectory_svg, Series};
use imagenav_core::eval::trials::run_trial;
use imagenav_core::eval::{
    compute_spl, compute_sr, crossing_pairs, fit_trial_model, evaluate_agent, generate_episode_set, run_episode, run_safety_trials,
    EvalConfig, Safety, ScriptedAgent, TrajectoryRow, TrialPair, WorldCache,
};
use imagenav_core::shield::{collect_collision_data, SafetyShield, ShieldConfig};
use imagenav_core::CollisionPredictor;
use imagenav_core::sim::{
    generate_world, geodesic_distance, Aabb, Difficulty, EnvConfig, EpisodeSpec, NormalizedAction, Obstacle, Pose,
    Profile, Rgb, Shape, Vec2, WorldMap,
};
use imagenav_core::train::StatsLog;
use proptest::prelude::*;
use rand::SeedableRng;

#[test]
fn episode_sets_are_deterministic() {
    let a = generate_episode_set(10, Difficulty::Easy, 1, Profile::Sparse, &[0, 1, 2]).unwrap();
    let b = generate_episode_set(10, Difficulty::Easy, 1, Profile::Sparse, &[0, 1, 2]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn episodes_respect_their_range_and_optimal_length() {
    for d in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let set = generate_episode_set(12, d, 5, Profile::Sparse, &[3, 4]).unwrap();
        let mut cache = WorldCache::new();
        let (lo, hi) = d.range();
        for e in &set {
            assert!(e.optimal_length >= lo && e.optimal_length < hi && e.optimal_length > 0.0);
            let w = cache.get(e.profile, e.world_seed).unwrap();
            assert!(w.is_free(e.start.position) && w.is_free(e.goal.position));
            let g = geodesic_distance(e.start.position, e.goal.position, &w).unwrap();
            assert!((g - e.optimal_length).abs() < 1e-9);
        }
    }
}

#[test]
fn spl_tabulated() {
    assert_eq!(compute_spl(&[(true, 3.0, 3.0)]), 1.0);
    assert_eq!(compute_spl(&[(false, 3.0, 3.0)]), 0.0);
    assert_eq!(compute_spl(&[(true, 4.0, 2.0), (false, 1.0, 2.0)]), 0.25);
    assert_eq!(compute_spl(&[(true, 0.0, 2.0)]), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn spl_never_exceeds_sr(rows in prop::collection::vec((any::<bool>(), 0.0f64..20.0, 0.01f64..10.0), 1..40)) {
        let spl = compute_spl(&rows);
        let sr = compute_sr(rows.iter().map(|r| r.0));
        prop_assert!(spl <= sr + 1e-15);
        prop_assert!(spl >= 0.0);
    }
}

fn grey() -> Rgb {
    Rgb([0.5, 0.5, 0.5])
}

/// Straight east-west corridor 1 m wide between two long boxes.
fn corridor() -> WorldMap {
    let bounds = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(8.0, 3.0));
    let wall = |y0: f64, y1: f64| Obstacle {
        shape: Shape::Rect(Aabb::new(Vec2::new(0.5, y0), Vec2::new(7.5, y1))),
        color: grey(),
    };
    WorldMap::new(0, None, bounds, vec![wall(0.2, 1.0), wall(2.0, 2.8)], Vec::new())
}

fn spec(world: &WorldMap, start: Pose, goal: Pose) -> EpisodeSpec {
    EpisodeSpec {
        world_seed: world.seed,
        profile: Profile::Sparse,
        start,
        goal,
        difficulty: Difficulty::Easy,
        optimal_length: geodesic_distance(start.position, goal.position, world).unwrap(),
    }
}

#[test]
fn scripted_corridor_run_is_near_optimal() {
    let w = Arc::new(corridor());
    let s = spec(&w, Pose::new(1.0, 1.5, 0.0), Pose::new(4.0, 1.5, 0.0));
    let mut agent = ScriptedAgent {
        script: |_: &_, _: &_| NormalizedAction::new(1.0, 0.0),
    };
    let r = run_episode(&mut agent, Arc::clone(&w), &s, 0, EnvConfig::default(), None, None).unwrap();
    assert!(r.success);
    assert_eq!(r.collisions, 0);
    assert!(r.spl() > 0.9);
}

#[test]
fn stopping_inside_the_success_region_succeeds() {
    let w = Arc::new(WorldMap::open(6.0, 6.0));
    let s = spec(&w, Pose::new(2.0, 3.0, 0.1), Pose::new(2.6, 3.0, 0.0));
    let mut agent = ScriptedAgent {
        script: |_: &_, _: &_| NormalizedAction::new(-1.0, 0.0),
    };
    let r = run_episode(&mut agent, Arc::clone(&w), &s, 0, EnvConfig::default(), None, None).unwrap();
    assert!(r.success);
    assert_eq!(r.steps, 1);
    assert_eq!(r.path_length, 0.0);
    let spl = r.spl();
    assert!(spl <= 1.0 && spl == 1.0);
}

#[test]
fn never_stopping_times_out() {
    let w = Arc::new(WorldMap::open(6.0, 6.0));
    let s = spec(&w, Pose::new(1.0, 3.0, 0.0), Pose::new(5.0, 3.0, 0.0));
    let mut agent = ScriptedAgent {
        script: |_: &_, _: &_| NormalizedAction::new(-1.0, 1.0),
    };
    let cfg = EnvConfig {
        max_steps: 60,
        ..EnvConfig::default()
    };
    let r = run_episode(&mut agent, Arc::clone(&w), &s, 0, cfg, None, None).unwrap();
    assert!(!r.success);
    assert_eq!(r.steps, 60);
}

#[test]
fn disconnected_episodes_are_skipped() {
    let w = Arc::new(WorldMap::open(6.0, 6.0));
    let mut cache = WorldCache::new();
    cache.insert(Arc::clone(&w), Profile::Sparse);
    let mut bad = spec(&w, Pose::new(1.0, 3.0, 0.0), Pose::new(5.0, 3.0, 0.0));
    bad.optimal_length = f64::INFINITY;
    let good = spec(&w, Pose::new(1.0, 3.0, 0.0), Pose::new(1.5, 3.0, 0.0));
    let mut agent = ScriptedAgent {
        script: |_: &_, _: &_| NormalizedAction::new(-1.0, 0.0),
    };
    let r = evaluate_agent(&mut agent, &[bad, good], EnvConfig::default(), None, &mut cache).unwrap();
    assert_eq!(r.skipped, vec![0]);
    assert_eq!(r.episodes.len(), 1);
}

#[test]
fn empty_training_log_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train_stats.csv");
    drop(StatsLog::create(&path).unwrap());
    let s = read_series(&path, "run", "steps", "rolling_sr").unwrap();
    assert!(s.points.is_empty());
    assert_eq!(curves_csv(&[s]), "series,x,y\n");
    assert_eq!(curves_csv(&[]), "series,x,y\n");
}

#[test]
fn curve_output_is_deterministic() {
    let s = vec![Series {
        name: "a".into(),
        points: vec![(0.0, 0.1), (1.0, 0.4)],
    }];
    assert_eq!(curves_csv(&s), curves_csv(&s));
    let svg = |s: &[Series]| imagenav_core::eval::plots::curves_svg(s, "t", "x", "y");
    assert_eq!(svg(&s), svg(&s));
}

#[test]
fn trajectory_svg_has_one_marker_per_step() {
    let w = generate_world(3, Profile::Poles).unwrap();
    let rows: Vec<TrajectoryRow> = (0..37)
        .map(|i| TrajectoryRow {
            time_step: i,
            x: 1.0 + 0.05 * i as f64,
            y: 2.0,
            theta: 0.0,
            v_lin: 0.25,
            v_ang: 0.0,
            reward: 0.0,
            collision: false,
            q_c: (i % 2 == 0).then_some(i as f64 / 40.0),
            corrected: false,
        })
        .collect();
    let svg = trajectory_svg(&w, &rows, Vec2::new(8.0, 8.0));
    assert_eq!(svg.matches(r#"class="wp""#).count(), rows.len());
    assert_eq!(svg, trajectory_svg(&w, &rows, Vec2::new(8.0, 8.0)));
}

#[test]
fn obstacle_free_pair_always_succeeds_without_corrections() {
    let w = WorldMap::open(10.0, 10.0);
    let q = CollisionPredictor::new(1).unwrap();
    let shield = SafetyShield::new(ShieldConfig::default()).unwrap();
    let cfg = EvalConfig::default();
    let pair = TrialPair::new(Vec2::new(2.0, 5.0), Vec2::new(8.0, 5.0));
    let off = run_safety_trials(&w, &[pair], 10, None, &cfg).unwrap();
    assert_eq!((off.sr, off.collisions), (1.0, 0));
    assert_eq!(off.correction_rate, 0.0);
    let fit = {
        let worlds = [WorldMap::open(10.0, 10.0), generate_world(50, Profile::Poles).unwrap()];
        let data = collect_collision_data(&worlds, 1500, 0.3, cfg.qc_horizon, 5).unwrap();
        let mut q = q;
        q.fit(&data, 20, 128, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5)).unwrap();
        q
    };
    let safety = Safety {
        model: &fit,
        shield: Some(&shield),
    };
    let on = run_safety_trials(&w, &[pair], 10, Some(safety), &cfg).unwrap();
    assert_eq!(on.sr, 1.0);
    assert_eq!(on.correction_rate, 0.0);
}

#[test]
fn crossing_pair_collides_without_the_shield_and_completes_with_it() {
    let cfg = EvalConfig {
        trial_jitter: 0.0,
        trial_yaw_noise: 0.0,
        ..EvalConfig::default()
    };
    let world = generate_world(cfg.trial_world_seed, Profile::Poles).unwrap();
    let pair = crossing_pairs(&world, 1, cfg.trial_seed).unwrap()[0];
    let off = run_trial(&world, &pair, None, &cfg, &mut rng(0), None).unwrap();
    assert!(off.collided);

    let q: CollisionPredictor = fit_trial_model(&cfg, 0.3).unwrap();
    let shield = SafetyShield::new(ShieldConfig::default()).unwrap();
    let safety = Safety {
        model: &q,
        shield: Some(&shield),
    };
    let on = run_trial(&world, &pair, Some(safety), &cfg, &mut rng(0), None).unwrap();
    assert!(!on.collided, "{on:?}");
    assert!(on.success, "{on:?}");
    assert!(on.corrections > 0);
}
