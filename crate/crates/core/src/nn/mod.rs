//! Minimal differentiable substrate: tensors, a reverse-mode tape, the layer
//! types the navigation model needs, and an adaptive-moment optimizer.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use layers::{Conv2d, GruCell, Linear};
pub use optim::Adam;
pub use params::{load_checkpoint, save_checkpoint, Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
