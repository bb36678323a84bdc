use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::config::EvalConfig;
use crate::eval::metrics::spl_term;
use crate::eval::runner::{Safety, TrajectoryRow};
use crate::scalar::Scalar;
use crate::shield::{collect_collision_data, preprocess_depth, CollisionPredictor};
use crate::sim::{
    depth_rays, generate_world, geodesic_distance, integrate, v_ang_max, wrap_angle, Action, AgentState, CameraConfig, Vec2,
    Profile, WorldMap, AGENT_RADIUS, V_LIN_MAX,
};

/// A point-to-point trial route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialPair {
    pub start_x: f64,
    pub start_y: f64,
    pub goal_x: f64,
    pub goal_y: f64,
}

impl TrialPair {
    pub fn new(start: Vec2, goal: Vec2) -> Self {
        TrialPair {
            start_x: start.x,
            start_y: start.y,
            goal_x: goal.x,
            goal_y: goal.y,
        }
    }

    pub fn start(&self) -> Vec2 {
        Vec2::new(self.start_x, self.start_y)
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::new(self.goal_x, self.goal_y)
    }
}

/// Smallest obstacle clearance of the agent centre along the segment.
pub fn segment_clearance(world: &WorldMap, a: Vec2, b: Vec2) -> f64 {
    let n = ((b - a).norm() / 0.02).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| world.clearance(a + (b - a) * (i as f64 / n as f64)))
        .fold(f64::INFINITY, f64::min)
}

/// Routes across the arena whose straight line runs through an obstacle,
/// from the left strip to the right strip.
pub fn crossing_pairs(world: &WorldMap, count: usize, seed: u64) -> Result<Vec<TrialPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = world.bounds;
    let margin = AGENT_RADIUS + 0.35;
    let mut out = Vec::with_capacity(count);
    for _ in 0..20_000 {
        if out.len() == count {
            break;
        }
        let start = Vec2::new(
            rng.random_range(b.min.x + margin..b.min.x + 1.5),
            rng.random_range(b.min.y + 1.0..b.max.y - 1.0),
        );
        let goal = Vec2::new(
            rng.random_range(b.max.x - 1.5..b.max.x - margin),
            rng.random_range(b.min.y + 1.0..b.max.y - 1.0),
        );
        if world.clearance(start) < margin || world.clearance(goal) < margin {
            continue;
        }
        // the centre line enters an obstacle, so driving straight collides
        if segment_clearance(world, start, goal) > 0.0 {
            continue;
        }
        if !geodesic_distance(start, goal, world)?.is_finite() {
            continue;
        }
        out.push(TrialPair::new(start, goal));
    }
    if out.len() < count {
        return Err(Error::Sampling(format!(
            "found {} of {count} crossing routes in world {}",
            out.len(),
            world.seed
        )));
    }
    Ok(out)
}

/// Collision predictor fitted on exploration data from `cfg.qc_worlds`
/// poles worlds disjoint from the trial world.
pub fn fit_trial_model<T: Scalar>(cfg: &EvalConfig, beta: f64) -> Result<CollisionPredictor<T>> {
    let worlds: Vec<WorldMap> = (0..cfg.qc_worlds as u64)
        .map(|i| generate_world(cfg.trial_world_seed + 100 + i, Profile::Poles))
        .collect::<Result<_>>()?;
    let data = collect_collision_data(&worlds, cfg.qc_steps_per_world, beta, cfg.qc_horizon, cfg.trial_seed)?;
    let mut q = CollisionPredictor::new(cfg.trial_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.trial_seed);
    q.fit(&data, cfg.qc_epochs, cfg.qc_batch, &mut rng)?;
    Ok(q)
}

/// Proportional heading controller at the reference forward speed.
pub fn heading_command(state: &AgentState, goal: Vec2, k_yaw: f64) -> Action {
    let to_goal = goal - state.position;
    let err = wrap_angle(to_goal.y.atan2(to_goal.x) - state.heading);
    let w = v_ang_max();
    Action::new(V_LIN_MAX, (k_yaw * err).clamp(-w, w))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub collided: bool,
    pub steps: usize,
    pub path_length: f64,
    pub optimal_length: f64,
    pub corrections: usize,
}

/// One trial. The start is jittered and every executed yaw rate is
/// disturbed, both drawn from `rng`; a contact ends the trial.
pub fn run_trial<R: Rng + ?Sized>(
    world: &WorldMap,
    pair: &TrialPair,
    safety: Option<Safety<'_>>,
    cfg: &EvalConfig,
    rng: &mut R,
    mut log: Option<&mut Vec<TrajectoryRow>>,
) -> Result<TrialOutcome> {
    let cam = CameraConfig::default();
    let goal = pair.goal();
    let mut start = pair.start();
    for _ in 0..100 {
        let j = Vec2::new(
            rng.random_range(-cfg.trial_jitter..=cfg.trial_jitter),
            rng.random_range(-cfg.trial_jitter..=cfg.trial_jitter),
        );
        if world.is_free(pair.start() + j) {
            start = pair.start() + j;
            break;
        }
    }
    let to_goal = goal - start;
    let mut state = AgentState {
        position: start,
        heading: to_goal.y.atan2(to_goal.x),
        time_step: 0,
    };
    let optimal = geodesic_distance(start, goal, world)?;
    let noise = Normal::new(0.0, cfg.trial_yaw_noise.to_radians().max(0.0))
        .map_err(|e| Error::invalid("trial_yaw_noise", e.to_string()))?;
    let (mut path, mut corrections) = (0.0, 0);
    let push = |log: &mut Option<&mut Vec<TrajectoryRow>>, s: &AgentState, a: Action, c: bool, q: Option<f64>, k: bool| {
        if let Some(l) = log.as_deref_mut() {
            l.push(TrajectoryRow {
                time_step: s.time_step,
                x: s.position.x,
                y: s.position.y,
                theta: s.heading,
                v_lin: a.v_lin,
                v_ang: a.v_ang,
                reward: 0.0,
                collision: c,
                q_c: q,
                corrected: k,
            });
        }
    };
    push(&mut log, &state, Action::new(0.0, 0.0), false, None, false);
    let outcome = |success, collided, steps, path, corrections| TrialOutcome {
        success,
        collided,
        steps,
        path_length: path,
        optimal_length: optimal,
        corrections,
    };
    for _ in 0..cfg.trial_max_steps {
        if state.position.dist(goal) <= cfg.trial_goal_radius {
            return Ok(outcome(true, false, state.time_step, path, corrections));
        }
        let proposed = heading_command(&state, goal, cfg.k_yaw).normalized();
        let (action, q, corrected) = match safety {
            Some(s) => {
                let sd = preprocess_depth(&depth_rays(world, &state.pose(), &cam), cam.max_depth)?;
                match s.shield {
                    Some(sh) => {
                        let c = sh.correct(proposed, &sd, s.model);
                        (c.action, Some(c.q), c.corrected || c.fallback)
                    }
                    None => (proposed, Some(s.model.probability(&sd, proposed.to_array())), false),
                }
            }
            None => (proposed, None, false),
        };
        let mut phys = action.physical();
        phys.v_ang += noise.sample(rng);
        let (next, collision) = integrate(&state, &phys, world, 0.1);
        path += next.position.dist(state.position);
        corrections += corrected as usize;
        state = next;
        push(&mut log, &state, phys, collision, q, corrected);
        if collision {
            return Ok(outcome(false, true, state.time_step, path, corrections));
        }
    }
    let success = state.position.dist(goal) <= cfg.trial_goal_radius;
    Ok(outcome(success, false, state.time_step, path, corrections))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: usize,
    pub start_x: f64,
    pub start_y: f64,
    pub goal_x: f64,
    pub goal_y: f64,
    pub trials: usize,
    pub sr: f64,
    pub spl: f64,
    pub collisions: usize,
    pub correction_rate: f64,
}

/// Per-route table plus the aggregate row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub pairs: Vec<PairReport>,
    pub sr: f64,
    pub spl: f64,
    pub correction_rate: f64,
    pub collisions: usize,
}

/// Trial `k` of pair `p` draws from a stream that depends only on
/// `(seed, p, k)`, so runs with and without the shield see the same
/// jitter and disturbances.
pub fn trial_rng(seed: u64, pair: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((pair as u64) << 32) | trial as u64);
    rng
}

pub fn run_safety_trials(
    world: &WorldMap,
    pairs: &[TrialPair],
    trials: usize,
    safety: Option<Safety<'_>>,
    cfg: &EvalConfig,
) -> Result<TrialReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    let (mut succ, mut spl_sum, mut steps, mut corr, mut coll) = (0usize, 0.0, 0usize, 0usize, 0usize);
    for (p, pair) in pairs.iter().enumerate() {
        let (mut ps, mut pspl, mut psteps, mut pcorr, mut pcoll) = (0usize, 0.0, 0usize, 0usize, 0usize);
        for k in 0..trials {
            let mut rng = trial_rng(cfg.trial_seed, p, k);
            let o = run_trial(world, pair, safety, cfg, &mut rng, None)?;
            ps += o.success as usize;
            pspl += spl_term(o.success, o.path_length, o.optimal_length);
            psteps += o.steps;
            pcorr += o.corrections;
            pcoll += o.collided as usize;
        }
        let t = trials.max(1) as f64;
        rows.push(PairReport {
            pair: p,
            start_x: pair.start_x,
            start_y: pair.start_y,
            goal_x: pair.goal_x,
            goal_y: pair.goal_y,
            trials,
            sr: ps as f64 / t,
            spl: pspl / t,
            collisions: pcoll,
            correction_rate: if psteps == 0 { 0.0 } else { pcorr as f64 / psteps as f64 },
        });
        succ += ps;
        spl_sum += pspl;
        steps += psteps;
        corr += pcorr;
        coll += pcoll;
    }
    let total = (pairs.len() * trials).max(1) as f64;
    Ok(TrialReport {
        pairs: rows,
        sr: succ as f64 / total,
        spl: spl_sum / total,
        correction_rate: if steps == 0 { 0.0 } else { corr as f64 / steps as f64 },
        collisions: coll,
    })
}

pub fn write_trial_report(path: &std::path::Path, report: &TrialReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &report.pairs {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
