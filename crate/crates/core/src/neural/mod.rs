//! Minimal CPU neural-network stack with exact backpropagation.
//!
//! Networks are plain layer sequences (3x3 valid convolutions, dense, ReLU,
//! sigmoid, inverted dropout, and a concatenation point for a side input such
//! as a critic's action). Activations are stored per sample as flat vectors;
//! the network input is channel-first (`C x H x W`) while convolution outputs
//! are channel-last (`H x W x C`), which is also the flatten order seen by a
//! following dense layer. Matrix products go through `matrixmultiply`.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient checking.

mod arch;
mod gemm;
mod gradcheck;
mod io;
mod layers;
mod loss;
mod network;
mod optim;
mod tensor;

pub use arch::{actor_network, critic_network, q_network, ArchConfig};
pub use gemm::Real;
pub use gradcheck::{gradient_check, numeric_gradient};
pub use io::{read_arrays, write_arrays, WEIGHT_FILE_MAGIC, WEIGHT_FILE_VERSION};
pub use layers::{Conv2d, Dense, InputLayout, Layer, LayerSpec};
pub use loss::{huber_loss, mse_loss};
pub use network::{BackwardOptions, Cache, Gradients, Network};
pub use optim::RmsProp;
pub use tensor::Tensor;

/// Serializable single-precision network: architecture plus weights.
pub type NetworkParams = Network<f32>;

#[cfg(test)]
mod tests;
