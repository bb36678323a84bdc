//! Recurrent actor-critic navigation model with a transition-prediction head.

pub mod distribution;
pub mod model;

pub use distribution::{gaussian_kl, gaussian_log_prob, log_one_minus_tanh_sq, sample_squashed, squashed_log_prob};
pub use model::{ActOutput, Heads, NavPolicy, PolicyConfig, PolicyState, Prediction};
