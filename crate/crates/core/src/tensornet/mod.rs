//! Reverse-mode differentiation core and the neural operations used by the
//! layout network: strided convolution, nearest-neighbor upsampling, leaky
//! ReLU, grouped softmax, weighted cross entropy, and the least-squares GAN
//! objectives, plus SGD with momentum, a finite-difference gradient checker,
//! and a binary checkpoint format.
//!
//! Everything is generic over [`Real`] so the same graph runs in f32 for
//! training and f64 for gradient verification. Convolutions parallelize over
//! independent output planes under the `parallel` feature; outputs are
//! bit-identical with or without it because each element is produced by
//! exactly one task with a fixed operation order.

mod checkpoint;
mod gradcheck;
mod kernels;
mod scalar;
mod sgd;
mod tape;
mod tensor;

pub use checkpoint::{decode_params, encode_params, CheckpointError, CHECKPOINT_MAGIC};
pub use gradcheck::{check_gradients, default_suite, GradCheckCase, GradCheckReport};
pub use kernels::conv2d_output_dim;
pub use scalar::Real;
pub use sgd::SgdState;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Tensor, TensorError};
