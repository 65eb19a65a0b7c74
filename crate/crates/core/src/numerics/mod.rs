//! Dense tensors with a reverse-mode differentiation tape.
//!
//! All model computation goes through [`Tape`]: values are recorded during the
//! forward pass and [`Tape::backward`] replays the recorded operations in
//! reverse to accumulate gradients. Reductions run in a fixed sequential order
//! so repeated runs produce identical bits.

mod gradcheck;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Scalar type used by every tensor.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
/// Scalar type used by every tensor.
#[cfg(feature = "single-precision")]
pub type Real = f32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid shape {shape:?}: extents must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("expected a matrix, got shape {shape:?}")]
    NotAMatrix { shape: Vec<usize> },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("concat of an empty list")]
    EmptyConcat,
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}
