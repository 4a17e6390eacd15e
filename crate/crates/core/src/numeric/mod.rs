//! Dense tensors, forward kernels and a recorded-tape autodiff graph.

mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParamCheck};
pub use graph::{conv2d, Graph, ParamStore, Var};
pub use kernels::{layer_norm, matmul, softmax_rows};
pub use tensor::Tensor;
