//! Image-goal navigation in procedural planar worlds: a ray-cast
//! simulator, a from-scratch autodiff stack, a recurrent actor-critic
//! trained with PPO plus future-prediction and random-shift auxiliary
//! losses, and a depth-based collision shield.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix
//! it to `f32`, the training precision.

pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod scalar;
pub mod shield;
pub mod sim;
pub mod train;

pub use config::Settings;
pub use error::{Error, Result};

pub type Tensor = nn::Tensor<f32>;
pub type ParamStore = nn::ParamStore<f32>;
pub type Policy = policy::NavPolicy<f32>;
pub type PolicyState = policy::PolicyState<f32>;
pub type CollisionPredictor = shield::CollisionPredictor<f32>;
pub type Trainer = train::Trainer<f32>;
pub type RolloutBatch = train::RolloutBatch<f32>;
