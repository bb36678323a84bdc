use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::policy::NavPolicy;
use crate::scalar::Scalar;
use crate::shield::CollisionPredictor;
use crate::sim::{generate_world, WorldMap};
use crate::train::config::TrainConfig;
use crate::train::rollout::RolloutCollector;
use crate::train::update::{ppo_update, Optimizers};

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UpdateStats {
    pub update: usize,
    pub steps: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub rolling_sr: f64,
    pub rolling_spl: f64,
    pub collision_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub rs_loss: f64,
    pub entropy: f64,
    pub fp_loss: f64,
    pub fp_reward: f64,
    pub fp_dynamics: f64,
    pub fp_termination: f64,
    pub qc_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub rl_grad_norm: f64,
    pub fp_grad_norm: f64,
}

/// CSV writer for [`UpdateStats`] rows.
pub struct StatsLog {
    writer: csv::Writer<File>,
}

impl StatsLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(StatsLog {
            writer: csv::Writer::from_path(path)?,
        })
    }

    pub fn write(&mut self, row: &UpdateStats) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Policy, collision predictor, optimizers and environments of one run.
pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    /// Soft-label margin for `Q_c` targets.
    pub beta: f64,
    pub policy: NavPolicy<T>,
    pub qc: CollisionPredictor<T>,
    pub optimizers: Optimizers<T>,
    pub collector: RolloutCollector<T>,
    rng: ChaCha8Rng,
    pub steps: usize,
    pub updates: usize,
    pub episodes: usize,
}

/// Training worlds named by the config.
pub fn training_worlds(cfg: &TrainConfig) -> Result<Vec<Arc<WorldMap>>> {
    cfg.world_seeds()
        .into_iter()
        .map(|s| generate_world(s, cfg.profile).map(Arc::new))
        .collect()
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, beta: f64) -> Result<Self> {
        config.validate()?;
        let worlds = training_worlds(&config)?;
        let policy = NavPolicy::new(config.policy_config(), config.seed)?;
        let mut qc = CollisionPredictor::new(config.seed.wrapping_add(1))?;
        qc.set_learning_rate(config.qc_learning_rate);
        let optimizers = Optimizers::new(&policy, &config);
        let collector = RolloutCollector::new(
            worlds,
            config.num_envs,
            config.env_config(),
            config.difficulty,
            config.hidden_dim,
            config.rolling_window,
            config.seed.wrapping_add(2),
        )?;
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(3)),
            config,
            beta,
            policy,
            qc,
            optimizers,
            collector,
            steps: 0,
            updates: 0,
            episodes: 0,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.config.total_steps
    }

    /// Collects one rollout and updates on it.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let cfg = &self.config;
        let (mut batch, finished) = self.collector.collect(&self.policy, cfg.rollout_len)?;
        batch.compute_advantages(cfg.discount, cfg.gae_lambda);
        let qc = if cfg.train_qc { Some(&mut self.qc) } else { None };
        let terms = ppo_update(
            &mut self.policy,
            qc,
            &mut self.optimizers,
            &batch,
            cfg,
            self.beta,
            &mut self.rng,
        )?;
        self.steps += batch.size();
        self.updates += 1;
        self.episodes += finished.len();
        let n = batch.size() as f64;
        Ok(UpdateStats {
            update: self.updates,
            steps: self.steps,
            episodes: self.episodes,
            mean_reward: batch.rewards.iter().sum::<f64>() / n,
            rolling_sr: self.collector.rolling_success(),
            rolling_spl: self.collector.rolling_spl(),
            collision_rate: batch.collisions.iter().filter(|&&c| c).count() as f64 / n,
            policy_loss: terms.policy_loss,
            value_loss: terms.value_loss,
            rs_loss: terms.rs_loss,
            entropy: terms.entropy,
            fp_loss: terms.fp_loss,
            fp_reward: terms.fp_reward,
            fp_dynamics: terms.fp_dynamics,
            fp_termination: terms.fp_termination,
            qc_loss: terms.qc_loss,
            approx_kl: terms.approx_kl,
            clip_fraction: terms.clip_fraction,
            rl_grad_norm: terms.rl_grad_norm,
            fp_grad_norm: terms.fp_grad_norm,
        })
    }

    /// Updates until the step budget is spent, passing every row to `sink`.
    pub fn run<F: FnMut(&UpdateStats, &Self) -> Result<()>>(&mut self, mut sink: F) -> Result<()> {
        while !self.is_finished() {
            let row = self.update()?;
            sink(&row, self)?;
        }
        Ok(())
    }
}
