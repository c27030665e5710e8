//! A compact reverse-mode automatic differentiation engine for 4-D
//! (`N × C × H × W`) `f64` tensors.
//!
//! The engine is built around a [`Graph`] tape: every operation on a [`Var`]
//! evaluates eagerly and records enough information to propagate gradients
//! back in [`Graph::backward`]. Parameters live in a [`ParamStore`] and are
//! bound to a graph either as trainable variables or as frozen constants.
//!
//! Convolutions are lowered to `im2col` + GEMM and fan out over the batch
//! dimension. With the `parallel` feature (on by default) the fan-out runs on
//! rayon; without it every kernel runs sequentially. Reductions over the
//! batch are always performed in sample order, so results are bit-identical
//! regardless of thread count.

mod error;
mod graph;
pub mod init;
mod kernels;
pub mod optim;
pub mod par;
mod params;
mod tensor;

pub use error::ShapeError;
pub use graph::{Gradients, Graph, Var};
pub use kernels::conv_output_size;
pub use params::{BindMode, Bindings, ParamStore};
pub use tensor::Tensor;

pub type Result<T, E = ShapeError> = std::result::Result<T, E>;
