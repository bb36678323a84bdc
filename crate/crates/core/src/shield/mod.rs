//! Depth-based collision prediction and action correction.

pub mod correction;
pub mod data;
pub mod depth;
pub mod predictor;

pub use correction::{correct_fixed, correct_gradient, gradient_step, Correction, SafetyShield, ShieldConfig, ShieldMode};
pub use data::{collect_collision_data, collides_within};
pub use depth::{
    block_ranges, compute_direction, mixed_label, preprocess_depth, preprocess_depth_image, soft_label, DepthVector,
    DEPTH_BLOCKS,
};
pub use predictor::{bce_with_logits, CollisionModel, CollisionPredictor, CollisionSample};
