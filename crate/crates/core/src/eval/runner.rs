use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::eval::episodes::WorldCache;
use crate::eval::metrics::{EpisodeResult, EvalResult};
use crate::policy::{NavPolicy, PolicyState};
use crate::scalar::Scalar;
use crate::shield::{preprocess_depth, CollisionModel, SafetyShield};
use crate::sim::{EnvConfig, EpisodeSpec, NavEnv, NormalizedAction, Observation, WorldMap};

/// Anything that picks a normalized action each step.
pub trait NavAgent {
    fn reset(&mut self);
    fn act(&mut self, obs: &Observation, env: &NavEnv) -> Result<NormalizedAction>;
    /// Told the action that was finally executed, after any correction.
    fn executed(&mut self, _action: NormalizedAction) {}
}

/// Deterministic policy: the squashed mean action.
pub struct PolicyAgent<'a, T: Scalar> {
    policy: &'a NavPolicy<T>,
    state: PolicyState<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> PolicyAgent<'a, T> {
    pub fn new(policy: &'a NavPolicy<T>) -> Self {
        PolicyAgent {
            policy,
            state: PolicyState::new(policy.config.hidden_dim),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl<T: Scalar> NavAgent for PolicyAgent<'_, T> {
    fn reset(&mut self) {
        self.state.reset();
    }

    fn act(&mut self, obs: &Observation, _env: &NavEnv) -> Result<NormalizedAction> {
        let out = self
            .policy
            .act(&[obs], std::slice::from_mut(&mut self.state), false, &mut self.rng)?;
        Ok(out[0].action)
    }

    fn executed(&mut self, action: NormalizedAction) {
        self.state.prev_action = action;
    }
}

/// Agent driven by a closure, for scripted baselines and tests.
pub struct ScriptedAgent<F> {
    pub script: F,
}

impl<F: FnMut(&Observation, &NavEnv) -> NormalizedAction> NavAgent for ScriptedAgent<F> {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation, env: &NavEnv) -> Result<NormalizedAction> {
        Ok((self.script)(obs, env))
    }
}

/// Collision model used for logging `Q_c`, with an optional shield that
/// corrects actions.
#[derive(Clone, Copy)]
pub struct Safety<'a> {
    pub model: &'a dyn CollisionModel,
    pub shield: Option<&'a SafetyShield>,
}

/// One step of a logged trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time_step: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_lin: f64,
    pub v_ang: f64,
    pub reward: f64,
    pub collision: bool,
    pub q_c: Option<f64>,
    pub corrected: bool,
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([
        "time_step", "x", "y", "theta", "v_lin", "v_ang", "reward", "collision", "q_c", "corrected",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    #[derive(serde::Deserialize)]
    struct Row {
        time_step: usize,
        x: f64,
        y: f64,
        theta: f64,
        v_lin: f64,
        v_ang: f64,
        reward: f64,
        collision: bool,
        q_c: Option<f64>,
        corrected: bool,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        out.push(TrajectoryRow {
            time_step: row.time_step,
            x: row.x,
            y: row.y,
            theta: row.theta,
            v_lin: row.v_lin,
            v_ang: row.v_ang,
            reward: row.reward,
            collision: row.collision,
            q_c: row.q_c,
            corrected: row.corrected,
        });
    }
    Ok(out)
}

/// Runs one episode to termination. The initial pose is logged as step 0.
pub fn run_episode<A: NavAgent + ?Sized>(
    agent: &mut A,
    world: Arc<WorldMap>,
    spec: &EpisodeSpec,
    index: usize,
    env_config: EnvConfig,
    safety: Option<Safety<'_>>,
    mut log: Option<&mut Vec<TrajectoryRow>>,
) -> Result<EpisodeResult> {
    let mut env = NavEnv::new(world, env_config);
    let mut obs = env.reset(spec.start, spec.goal)?;
    agent.reset();
    let max_depth = env_config.camera.max_depth;
    let (mut collisions, mut corrections, mut success) = (0, 0, false);
    let mut final_distance = env.distance_to_goal()?;
    if let Some(log) = log.as_deref_mut() {
        let s = env.state();
        log.push(TrajectoryRow {
            time_step: 0,
            x: s.position.x,
            y: s.position.y,
            theta: s.heading,
            v_lin: 0.0,
            v_ang: 0.0,
            reward: 0.0,
            collision: false,
            q_c: None,
            corrected: false,
        });
    }
    while !env.is_done() {
        let proposed = agent.act(&obs, &env)?;
        let (action, q, corrected) = match safety {
            Some(s) => {
                let sd = preprocess_depth(&obs.depth, max_depth)?;
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
        agent.executed(action);
        let phys = action.physical();
        let res = env.step(&phys)?;
        collisions += res.collision as usize;
        corrections += corrected as usize;
        final_distance = res.info.distance;
        success = res.info.success;
        if let Some(log) = log.as_deref_mut() {
            let s = env.state();
            log.push(TrajectoryRow {
                time_step: s.time_step,
                x: s.position.x,
                y: s.position.y,
                theta: s.heading,
                v_lin: phys.v_lin,
                v_ang: phys.v_ang,
                reward: res.reward,
                collision: res.collision,
                q_c: q,
                corrected,
            });
        }
        obs = res.observation;
    }
    Ok(EpisodeResult {
        episode: index,
        world_seed: spec.world_seed,
        success,
        path_length: env.path_length(),
        optimal_length: spec.optimal_length,
        steps: env.state().time_step,
        collisions,
        corrections,
        final_distance,
    })
}

/// Runs every episode with `agent`. Episodes whose optimal length is not
/// finite and positive are skipped and listed in the result.
pub fn evaluate_agent<A: NavAgent + ?Sized>(
    agent: &mut A,
    episodes: &[EpisodeSpec],
    env_config: EnvConfig,
    safety: Option<Safety<'_>>,
    cache: &mut WorldCache,
) -> Result<EvalResult> {
    let mut out = EvalResult::default();
    for (i, spec) in episodes.iter().enumerate() {
        if !(spec.optimal_length.is_finite() && spec.optimal_length > 0.0) {
            out.skipped.push(i);
            continue;
        }
        let world = cache.get(spec.profile, spec.world_seed)?;
        let r = run_episode(agent, world, spec, i, env_config, safety, None)?;
        out.total_steps += r.steps;
        out.corrected_steps += r.corrections;
        out.episodes.push(r);
    }
    Ok(out)
}

/// Deterministic evaluation of a policy, optionally behind the shield.
pub fn evaluate_policy<T: Scalar>(
    policy: &NavPolicy<T>,
    safety: Option<Safety<'_>>,
    episodes: &[EpisodeSpec],
    env_config: EnvConfig,
    cache: &mut WorldCache,
) -> Result<EvalResult> {
    let mut agent = PolicyAgent::new(policy);
    evaluate_agent(&mut agent, episodes, env_config, safety, cache)
}
