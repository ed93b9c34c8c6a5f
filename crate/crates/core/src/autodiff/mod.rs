//! Reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor)s.
//!
//! A [`Graph`] records each operation eagerly as it is applied and can then
//! propagate gradients from any scalar node back to its parameter leaves.
//! The operation set is exactly what the slice-sequence model needs:
//! matrix products, 2-D convolution, pointwise nonlinearities, channel
//! concatenation, average pooling and a numerically stable multi-label loss.

mod graph;
pub(crate) mod kernels;

pub mod gradcheck;

pub use gradcheck::{gradient_check, relative_error, GradCheck, GradCheckReport};
pub use graph::{Elementwise, Gradients, Graph, NodeId};

#[cfg(test)]
mod tests;
