//! Dense tensors, a recorded computation graph with reverse-mode gradients,
//! and a central-difference oracle for checking them.

mod fd;
mod graph;
mod tensor;

pub use fd::{finite_diff_grad, relative_error, scaled_step};
pub use graph::{argmax, softmax_rows, Axis, Gradients, Graph, PrimitiveKind, Var, ARCCOS_CLAMP, NORM_GUARD};
pub use tensor::Tensor;
