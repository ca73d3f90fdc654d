//! A small reverse-mode automatic differentiation engine over dense 2-D
//! tensors, plus the Adam optimizer. It implements exactly the operations the
//! reconstruction model needs and nothing more: the only broadcast is adding a
//! bias row to every row of a matrix.

mod adam;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};

#[cfg(test)]
pub(crate) use tape::{sigmoid, softmax_slice};

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
