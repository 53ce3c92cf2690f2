//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_fn, finite_diff_check_with, relative_error, GradCheck, Scheme};
pub use graph::{Gradients, Graph, Var};
pub use tensor::{Real, Tensor};
