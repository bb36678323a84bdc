use std::fmt::Write as _;

use crate::config::{parse_bool, parse_difficulty, parse_profile, parse_value};
use crate::error::Result;
use crate::sim::{Difficulty, Profile};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub eval_difficulty: Difficulty,
    pub eval_profile: Profile,
    /// First world seed of the evaluation worlds; `None` reuses the
    /// training worlds.
    pub eval_world_seed: Option<u64>,
    pub eval_world_count: usize,
    pub eval_max_steps: usize,
    pub use_shield: bool,
    pub trial_pairs: usize,
    pub trial_count: usize,
    pub trial_seed: u64,
    pub trial_world_seed: u64,
    pub trial_max_steps: usize,
    pub trial_goal_radius: f64,
    pub k_yaw: f64,
    /// Start position jitter between repeated trials, metres.
    pub trial_jitter: f64,
    /// Standard deviation of the per-step yaw-rate disturbance, deg/s.
    pub trial_yaw_noise: f64,
    pub qc_worlds: usize,
    pub qc_steps_per_world: usize,
    pub qc_epochs: usize,
    pub qc_batch: usize,
    /// Steps an action is held when labelling exploration data.
    pub qc_horizon: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            eval_episodes: 100,
            eval_seed: 1_000,
            eval_difficulty: Difficulty::Easy,
            eval_profile: Profile::Sparse,
            eval_world_seed: None,
            eval_world_count: 8,
            eval_max_steps: 500,
            use_shield: false,
            trial_pairs: 9,
            trial_count: 10,
            trial_seed: 7,
            trial_world_seed: 3,
            trial_max_steps: 1_500,
            trial_goal_radius: 1.0,
            k_yaw: 1.0,
            trial_jitter: 0.1,
            trial_yaw_noise: 2.0,
            qc_worlds: 8,
            qc_steps_per_world: 4_000,
            qc_epochs: 40,
            qc_batch: 256,
            qc_horizon: 50,
        }
    }
}

impl EvalConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "eval_episodes" => self.eval_episodes = parse_value(key, v)?,
            "eval_seed" => self.eval_seed = parse_value(key, v)?,
            "eval_difficulty" => self.eval_difficulty = parse_difficulty(key, v)?,
            "eval_profile" => self.eval_profile = parse_profile(key, v)?,
            "eval_world_seed" => {
                self.eval_world_seed = match v {
                    "train" | "none" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "eval_world_count" => self.eval_world_count = parse_value(key, v)?,
            "eval_max_steps" => self.eval_max_steps = parse_value(key, v)?,
            "use_shield" => self.use_shield = parse_bool(key, v)?,
            "trial_pairs" => self.trial_pairs = parse_value(key, v)?,
            "trial_count" => self.trial_count = parse_value(key, v)?,
            "trial_seed" => self.trial_seed = parse_value(key, v)?,
            "trial_world_seed" => self.trial_world_seed = parse_value(key, v)?,
            "trial_max_steps" => self.trial_max_steps = parse_value(key, v)?,
            "trial_goal_radius" => self.trial_goal_radius = parse_value(key, v)?,
            "k_yaw" => self.k_yaw = parse_value(key, v)?,
            "trial_jitter" => self.trial_jitter = parse_value(key, v)?,
            "trial_yaw_noise" => self.trial_yaw_noise = parse_value(key, v)?,
            "qc_worlds" => self.qc_worlds = parse_value(key, v)?,
            "qc_steps_per_world" => self.qc_steps_per_world = parse_value(key, v)?,
            "qc_epochs" => self.qc_epochs = parse_value(key, v)?,
            "qc_batch" => self.qc_batch = parse_value(key, v)?,
            "qc_horizon" => self.qc_horizon = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("eval_seed", self.eval_seed.to_string());
        kv("eval_difficulty", self.eval_difficulty.to_string());
        kv("eval_profile", self.eval_profile.to_string());
        kv(
            "eval_world_seed",
            self.eval_world_seed.map_or("train".to_string(), |s| s.to_string()),
        );
        kv("eval_world_count", self.eval_world_count.to_string());
        kv("eval_max_steps", self.eval_max_steps.to_string());
        kv("use_shield", self.use_shield.to_string());
        kv("trial_pairs", self.trial_pairs.to_string());
        kv("trial_count", self.trial_count.to_string());
        kv("trial_seed", self.trial_seed.to_string());
        kv("trial_world_seed", self.trial_world_seed.to_string());
        kv("trial_max_steps", self.trial_max_steps.to_string());
        kv("trial_goal_radius", self.trial_goal_radius.to_string());
        kv("k_yaw", self.k_yaw.to_string());
        kv("trial_jitter", self.trial_jitter.to_string());
        kv("trial_yaw_noise", self.trial_yaw_noise.to_string());
        kv("qc_worlds", self.qc_worlds.to_string());
        kv("qc_steps_per_world", self.qc_steps_per_world.to_string());
        kv("qc_epochs", self.qc_epochs.to_string());
        kv("qc_batch", self.qc_batch.to_string());
        kv("qc_horizon", self.qc_horizon.to_string());
        s
    }
}
