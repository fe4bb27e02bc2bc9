//! Minimal reverse-mode automatic differentiation over dense matrices.

mod adam;
mod check;
mod graph;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use check::{check_param_gradients, finite_difference_check};
pub use graph::{Gradients, Graph, Var};
pub use params::{Binding, NamedTensor, ParamId, ParamStore};
pub use tensor::Tensor;
