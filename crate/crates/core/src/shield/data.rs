use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::shield::depth::{preprocess_depth, soft_label};
use crate::shield::predictor::CollisionSample;
use crate::sim::{depth_rays, integrate, sample_free_pose, AgentState, CameraConfig, NormalizedAction, WorldMap};

/// Whether holding `action` for `horizon` steps from `state` touches an
/// obstacle.
pub fn collides_within(world: &WorldMap, state: &AgentState, action: &NormalizedAction, horizon: usize) -> bool {
    let phys = action.physical();
    let mut s = *state;
    for _ in 0..horizon.max(1) {
        let (next, collision) = integrate(&s, &phys, world, 0.1);
        if collision {
            return true;
        }
        s = next;
    }
    false
}

/// Independent samples for fitting `Q_c` outside of policy training: a
/// uniformly drawn free pose, half of them pulled within one metre of an
/// obstacle, paired with a uniformly drawn action. The hard label of a
/// sample is contact within `horizon` steps of holding its action.
pub fn collect_collision_data(
    worlds: &[WorldMap],
    steps_per_world: usize,
    beta: f64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<CollisionSample>> {
    let cam = CameraConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(worlds.len() * steps_per_world);
    for world in worlds {
        for k in 0..steps_per_world {
            let mut pose = sample_free_pose(world, &mut rng)?;
            if k % 2 == 1 {
                for _ in 0..50 {
                    if world.clearance(pose.position) < 1.0 {
                        break;
                    }
                    pose = sample_free_pose(world, &mut rng)?;
                }
            }
            let state = AgentState {
                position: pose.position,
                heading: pose.heading,
                time_step: 0,
            };
            let action = NormalizedAction::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            let sd = preprocess_depth(&depth_rays(world, &state.pose(), &cam), cam.max_depth)?;
            out.push(CollisionSample {
                depth: sd,
                action: action.to_array(),
                hard: collides_within(world, &state, &action, horizon),
                soft: soft_label(&sd, beta),
            });
        }
    }
    Ok(out)
}
