use std::fmt::Write as _;

use crate::config::{parse_bool, parse_difficulty, parse_profile, parse_value};
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::sim::{Difficulty, EnvConfig, Profile};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: usize,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub chunk_len: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip_eps: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lambda_r: f64,
    pub lambda_d: f64,
    pub lambda_t: f64,
    pub lambda_rs: f64,
    pub reward_bins: usize,
    pub reward_min: f64,
    pub reward_max: f64,
    pub shift_max: usize,
    pub use_fp: bool,
    pub use_rs: bool,
    pub train_qc: bool,
    pub qc_learning_rate: f64,
    pub profile: Profile,
    pub world_seed: u64,
    pub world_count: usize,
    pub difficulty: Difficulty,
    pub max_steps: usize,
    pub geodesic: bool,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub log_std_init: f64,
    pub rolling_window: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            total_steps: 500_000,
            num_envs: 8,
            rollout_len: 256,
            chunk_len: 32,
            minibatches: 4,
            epochs: 2,
            clip_eps: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            learning_rate: 2.5e-4,
            max_grad_norm: 0.5,
            value_coef: 1.0,
            entropy_coef: 0.0,
            lambda_r: 0.1,
            lambda_d: 1.0,
            lambda_t: 0.1,
            lambda_rs: 0.5,
            reward_bins: 41,
            reward_min: -1.0,
            reward_max: 3.0,
            shift_max: 4,
            use_fp: true,
            use_rs: true,
            train_qc: true,
            qc_learning_rate: 1e-3,
            profile: Profile::Sparse,
            world_seed: 0,
            world_count: 8,
            difficulty: Difficulty::Easy,
            max_steps: 500,
            geodesic: true,
            feature_dim: 256,
            hidden_dim: 128,
            log_std_init: -0.5,
            rolling_window: 100,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Sets one field from text. `Ok(false)` means the key is not a
    /// training key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "total_steps" => self.total_steps = parse_value(key, v)?,
            "num_envs" => self.num_envs = parse_value(key, v)?,
            "rollout_len" => self.rollout_len = parse_value(key, v)?,
            "chunk_len" => self.chunk_len = parse_value(key, v)?,
            "minibatches" => self.minibatches = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "clip_eps" => self.clip_eps = parse_value(key, v)?,
            "discount" => self.discount = parse_value(key, v)?,
            "gae_lambda" => self.gae_lambda = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "max_grad_norm" => self.max_grad_norm = parse_value(key, v)?,
            "value_coef" => self.value_coef = parse_value(key, v)?,
            "entropy_coef" => self.entropy_coef = parse_value(key, v)?,
            "lambda_r" => self.lambda_r = parse_value(key, v)?,
            "lambda_d" => self.lambda_d = parse_value(key, v)?,
            "lambda_t" => self.lambda_t = parse_value(key, v)?,
            "lambda_rs" => self.lambda_rs = parse_value(key, v)?,
            "reward_bins" => self.reward_bins = parse_value(key, v)?,
            "reward_min" => self.reward_min = parse_value(key, v)?,
            "reward_max" => self.reward_max = parse_value(key, v)?,
            "shift_max" => self.shift_max = parse_value(key, v)?,
            "use_fp" => self.use_fp = parse_bool(key, v)?,
            "use_rs" => self.use_rs = parse_bool(key, v)?,
            "train_qc" => self.train_qc = parse_bool(key, v)?,
            "qc_learning_rate" => self.qc_learning_rate = parse_value(key, v)?,
            "profile" => self.profile = parse_profile(key, v)?,
            "world_seed" => self.world_seed = parse_value(key, v)?,
            "world_count" => self.world_count = parse_value(key, v)?,
            "difficulty" => self.difficulty = parse_difficulty(key, v)?,
            "max_steps" => self.max_steps = parse_value(key, v)?,
            "geodesic" => self.geodesic = parse_bool(key, v)?,
            "feature_dim" => self.feature_dim = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "log_std_init" => self.log_std_init = parse_value(key, v)?,
            "rolling_window" => self.rolling_window = parse_value(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("num_envs", self.num_envs.to_string());
        kv("rollout_len", self.rollout_len.to_string());
        kv("chunk_len", self.chunk_len.to_string());
        kv("minibatches", self.minibatches.to_string());
        kv("epochs", self.epochs.to_string());
        kv("clip_eps", self.clip_eps.to_string());
        kv("discount", self.discount.to_string());
        kv("gae_lambda", self.gae_lambda.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("max_grad_norm", self.max_grad_norm.to_string());
        kv("value_coef", self.value_coef.to_string());
        kv("entropy_coef", self.entropy_coef.to_string());
        kv("lambda_r", self.lambda_r.to_string());
        kv("lambda_d", self.lambda_d.to_string());
        kv("lambda_t", self.lambda_t.to_string());
        kv("lambda_rs", self.lambda_rs.to_string());
        kv("reward_bins", self.reward_bins.to_string());
        kv("reward_min", self.reward_min.to_string());
        kv("reward_max", self.reward_max.to_string());
        kv("shift_max", self.shift_max.to_string());
        kv("use_fp", self.use_fp.to_string());
        kv("use_rs", self.use_rs.to_string());
        kv("train_qc", self.train_qc.to_string());
        kv("qc_learning_rate", self.qc_learning_rate.to_string());
        kv("profile", self.profile.to_string());
        kv("world_seed", self.world_seed.to_string());
        kv("world_count", self.world_count.to_string());
        kv("difficulty", self.difficulty.to_string());
        kv("max_steps", self.max_steps.to_string());
        kv("geodesic", self.geodesic.to_string());
        kv("feature_dim", self.feature_dim.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("log_std_init", self.log_std_init.to_string());
        kv("rolling_window", self.rolling_window.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_envs", self.num_envs),
            ("rollout_len", self.rollout_len),
            ("chunk_len", self.chunk_len),
            ("minibatches", self.minibatches),
            ("world_count", self.world_count),
            ("max_steps", self.max_steps),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::invalid(k, "must be positive"));
            }
        }
        if self.rollout_len % self.chunk_len != 0 {
            return Err(Error::invalid("chunk_len", "must divide rollout_len"));
        }
        let chunks = self.num_envs * self.rollout_len / self.chunk_len;
        if chunks < self.minibatches {
            return Err(Error::invalid("minibatches", format!("only {chunks} sequence chunks available")));
        }
        let weights = [
            ("lambda_r", self.lambda_r),
            ("lambda_d", self.lambda_d),
            ("lambda_t", self.lambda_t),
            ("lambda_rs", self.lambda_rs),
            ("value_coef", self.value_coef),
            ("entropy_coef", self.entropy_coef),
        ];
        for (k, v) in weights {
            if !(v >= 0.0) {
                return Err(Error::invalid(k, "loss weights must be non-negative"));
            }
        }
        if self.reward_bins < 2 || !(self.reward_max > self.reward_min) {
            return Err(Error::invalid("reward_bins", "bin edges must be strictly increasing"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid("clip_eps", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            log_std_init: self.log_std_init,
            reward_bins: self.reward_bins,
            ..PolicyConfig::default()
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            max_steps: self.max_steps,
            geodesic: self.geodesic,
            ..EnvConfig::default()
        }
    }

    pub fn steps_per_update(&self) -> usize {
        self.num_envs * self.rollout_len
    }

    /// Seeds of the training worlds.
    pub fn world_seeds(&self) -> Vec<u64> {
        (0..self.world_count as u64).map(|i| self.world_seed + i).collect()
    }
}
