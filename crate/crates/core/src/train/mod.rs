//! On-policy training: rollouts, advantage estimation, the clipped PPO
//! objective and the two self-supervised auxiliary losses.

pub mod augment;
pub mod config;
pub mod gae;
pub mod losses;
pub mod rollout;
pub mod trainer;
pub mod twohot;
pub mod update;

pub use augment::{random_shift, shift_current, shift_planes};
pub use config::TrainConfig;
pub use gae::{compute_gae, normalize};
pub use rollout::{EpisodeOutcome, RolloutBatch, RolloutCollector};
pub use trainer::{training_worlds, StatsLog, Trainer, UpdateStats};
pub use twohot::TwoHotCoder;
pub use update::{ppo_update, Optimizers, UpdateTerms};
