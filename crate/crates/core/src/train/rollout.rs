use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::policy::{NavPolicy, PolicyState};
use crate::scalar::Scalar;
use crate::shield::{preprocess_depth, soft_label, CollisionSample, DepthVector};
use crate::sim::{sample_start_goal, Difficulty, EnvConfig, NavEnv, Observation, WorldMap};
use crate::train::gae::{compute_gae, normalize};

/// On-policy experience from `num_envs` environments over `len` steps,
/// stored time-major: entry `t * num_envs + i` is step `t` of env `i`.
#[derive(Clone, Debug)]
pub struct RolloutBatch<T> {
    pub num_envs: usize,
    pub len: usize,
    /// Stacked `O_c (+) O_g` frames `s_t`.
    pub frames: Vec<Vec<T>>,
    /// `s_{t+1}` for steps that ended an episode (the last frame of that
    /// episode); other successors are the next entry of `frames`.
    pub terminal_frames: BTreeMap<usize, Vec<T>>,
    /// Observation after the final step of each env.
    pub last_frames: Vec<Vec<T>>,
    /// Action fed to the recurrent core at step `t` (zero at episode starts).
    pub prev_actions: Vec<[f64; 2]>,
    /// Pre-squash samples.
    pub u: Vec<[f64; 2]>,
    /// Normalized actions executed.
    pub actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub collisions: Vec<bool>,
    pub depth: Vec<DepthVector>,
    /// Recurrent state is reset before this step.
    pub starts: Vec<bool>,
    /// Recurrent state entering the step.
    pub hidden_in: Vec<Vec<T>>,
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<T: Scalar> RolloutBatch<T> {
    pub fn size(&self) -> usize {
        self.num_envs * self.len
    }

    /// Successor frame `s_{t+1}` of entry `idx`.
    pub fn next_frame(&self, idx: usize) -> &[T] {
        if let Some(f) = self.terminal_frames.get(&idx) {
            return f;
        }
        let next = idx + self.num_envs;
        if next < self.size() {
            &self.frames[next]
        } else {
            &self.last_frames[idx % self.num_envs]
        }
    }

    /// GAE per environment, then advantage standardization over the batch.
    pub fn compute_advantages(&mut self, discount: f64, lambda: f64) {
        let (n, len) = (self.num_envs, self.len);
        self.advantages = vec![0.0; n * len];
        self.returns = vec![0.0; n * len];
        for i in 0..n {
            let col = |v: &[f64]| (0..len).map(|t| v[t * n + i]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..len).map(|t| self.dones[t * n + i]).collect();
            let (adv, ret) = compute_gae(
                &col(&self.rewards),
                &col(&self.values),
                &dones,
                self.bootstrap[i],
                discount,
                lambda,
            );
            for t in 0..len {
                self.advantages[t * n + i] = adv[t];
                self.returns[t * n + i] = ret[t];
            }
        }
        normalize(&mut self.advantages);
    }

    /// Collision-predictor samples for the given entries.
    pub fn collision_samples(&self, indices: &[usize], beta: f64) -> Vec<CollisionSample> {
        indices
            .iter()
            .map(|&i| CollisionSample {
                depth: self.depth[i],
                action: self.actions[i],
                hard: self.collisions[i],
                soft: soft_label(&self.depth[i], beta),
            })
            .collect()
    }
}

/// Outcome of one finished training episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub spl: f64,
    pub steps: usize,
    pub collisions: usize,
    pub total_reward: f64,
}

struct Slot<T> {
    env: NavEnv,
    obs: Observation,
    state: PolicyState<T>,
    start: bool,
    optimal: f64,
    collisions: usize,
    total_reward: f64,
}

/// Steps a fixed set of environments with the current policy, resampling
/// a world and a start/goal pair whenever an episode ends.
pub struct RolloutCollector<T: Scalar> {
    worlds: Vec<Arc<WorldMap>>,
    env_config: EnvConfig,
    difficulty: Difficulty,
    slots: Vec<Slot<T>>,
    rng: ChaCha8Rng,
    window: usize,
    pub recent: VecDeque<EpisodeOutcome>,
}

impl<T: Scalar> RolloutCollector<T> {
    pub fn new(
        worlds: Vec<Arc<WorldMap>>,
        num_envs: usize,
        env_config: EnvConfig,
        difficulty: Difficulty,
        hidden_dim: usize,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut c = RolloutCollector {
            worlds,
            env_config,
            difficulty,
            slots: Vec::with_capacity(num_envs),
            rng: ChaCha8Rng::seed_from_u64(seed),
            window,
            recent: VecDeque::new(),
        };
        for _ in 0..num_envs {
            let slot = c.new_episode(PolicyState::new(hidden_dim))?;
            c.slots.push(slot);
        }
        Ok(c)
    }

    fn new_episode(&mut self, mut state: PolicyState<T>) -> Result<Slot<T>> {
        let w = self.rng.random_range(0..self.worlds.len());
        let world = Arc::clone(&self.worlds[w]);
        let (start, goal, optimal) = sample_start_goal(&world, self.difficulty.range(), &mut self.rng)?;
        let mut env = NavEnv::new(world, self.env_config);
        let obs = env.reset(start, goal)?;
        state.reset();
        Ok(Slot {
            env,
            obs,
            state,
            start: true,
            optimal,
            collisions: 0,
            total_reward: 0.0,
        })
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn rolling_success(&self) -> f64 {
        mean_of(self.recent.iter().map(|o| o.success as u8 as f64))
    }

    pub fn rolling_spl(&self) -> f64 {
        mean_of(self.recent.iter().map(|o| o.spl))
    }

    /// Collects `len` steps per environment. Returns the batch (advantages
    /// not yet computed) and the episodes finished meanwhile.
    pub fn collect(&mut self, policy: &NavPolicy<T>, len: usize) -> Result<(RolloutBatch<T>, Vec<EpisodeOutcome>)> {
        let n = self.slots.len();
        let size = n * len;
        let mut b = RolloutBatch {
            num_envs: n,
            len,
            frames: Vec::with_capacity(size),
            terminal_frames: BTreeMap::new(),
            last_frames: Vec::with_capacity(n),
            prev_actions: Vec::with_capacity(size),
            u: Vec::with_capacity(size),
            actions: Vec::with_capacity(size),
            log_probs: Vec::with_capacity(size),
            values: Vec::with_capacity(size),
            rewards: Vec::with_capacity(size),
            dones: Vec::with_capacity(size),
            collisions: Vec::with_capacity(size),
            depth: Vec::with_capacity(size),
            starts: Vec::with_capacity(size),
            hidden_in: Vec::with_capacity(size),
            bootstrap: vec![0.0; n],
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        let mut finished = Vec::new();
        for t in 0..len {
            let obs: Vec<&Observation> = self.slots.iter().map(|s| &s.obs).collect();
            let mut states: Vec<PolicyState<T>> = self.slots.iter().map(|s| s.state.clone()).collect();
            let outs = policy.act(&obs, &mut states, true, &mut self.rng)?;
            for (i, (out, state)) in outs.into_iter().zip(states).enumerate() {
                let idx = t * n + i;
                let slot = &mut self.slots[i];
                b.frames.push(policy.stack(&slot.obs.current, &slot.obs.goal)?);
                b.depth.push(preprocess_depth(&slot.obs.depth, self.env_config.camera.max_depth)?);
                b.prev_actions.push(slot.state.prev_action.to_array());
                b.starts.push(slot.start);
                b.hidden_in.push(out.hidden_in);
                b.u.push(out.u);
                b.actions.push(out.action.to_array());
                b.log_probs.push(out.log_prob);
                b.values.push(out.value);

                let res = slot.env.step(&out.action.physical())?;
                b.rewards.push(res.reward);
                b.dones.push(res.done);
                b.collisions.push(res.collision);
                slot.collisions += res.collision as usize;
                slot.total_reward += res.reward;
                slot.state = state;
                slot.state.prev_action = out.action;
                slot.start = false;
                slot.obs = res.observation;
                if res.done {
                    b.terminal_frames.insert(idx, policy.stack(&slot.obs.current, &slot.obs.goal)?);
                    let p = slot.env.path_length();
                    let success = res.info.success;
                    let outcome = EpisodeOutcome {
                        success,
                        spl: if success { slot.optimal / slot.optimal.max(p) } else { 0.0 },
                        steps: slot.env.state().time_step,
                        collisions: slot.collisions,
                        total_reward: slot.total_reward,
                    };
                    finished.push(outcome);
                    self.recent.push_back(outcome);
                    while self.recent.len() > self.window {
                        self.recent.pop_front();
                    }
                    let state = std::mem::replace(&mut self.slots[i].state, PolicyState::new(0));
                    self.slots[i] = self.new_episode(state)?;
                }
            }
        }
        for slot in &self.slots {
            b.last_frames.push(policy.stack(&slot.obs.current, &slot.obs.goal)?);
        }
        // values of the observations following the rollout
        let obs: Vec<&Observation> = self.slots.iter().map(|s| &s.obs).collect();
        let mut states: Vec<PolicyState<T>> = self.slots.iter().map(|s| s.state.clone()).collect();
        let outs = policy.act(&obs, &mut states, false, &mut self.rng)?;
        for (i, o) in outs.iter().enumerate() {
            b.bootstrap[i] = o.value;
        }
        Ok((b, finished))
    }
}

fn mean_of(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}
