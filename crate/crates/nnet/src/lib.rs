//! A small differentiable-layer framework: tensors, a fixed layer set
//! (convolution, max-pooling, flatten, dense, dropout, activations),
//! exact backpropagation, Adam/SGD optimizers, finite-difference gradient
//! checking, and a bit-exact checkpoint container.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layer;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, GradientCheckReport};
pub use layer::{Activation, Layer, LayerSpec};
pub use network::{Gradients, Mode, Network, Trace};
pub use ops::Loss;
pub use optim::{AdamConfig, AdamState, Optimizer, OptimizerConfig};
pub use tensor::Tensor;
