//! Dense tensors and a small reverse-mode differentiation engine.

mod gradcheck;
mod sparse;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, RELATIVE_ERROR_FLOOR};
pub use sparse::SparseMatrix;
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
