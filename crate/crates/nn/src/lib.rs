//! Reverse-mode automatic differentiation for small 2-D convolutional
//! networks on the CPU.
//!
//! The engine is deliberately narrow: tensors are dense NCHW arrays, the op
//! set covers what a U-Net style score network needs (3×3 / 1×1 convolution,
//! group normalization, SiLU, FiLM modulation, channel concatenation,
//! pooling, nearest-neighbour upsampling and dense layers), and every op
//! carries a hand-written backward pass. It is generic over [`Real`] so the
//! same network runs in `f32` for training and in `f64` for finite-difference
//! gradient checks.

mod error;
mod graph;
pub mod init;
pub mod optim;
mod params;
mod real;
mod tensor;

pub use error::{NnError, Result};
pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamSpec, ParamStore};
pub use real::{DType, Real};
pub use tensor::Tensor;
