//! Dense and sparse linear algebra, reverse-mode differentiation, Adam, and
//! seeded randomness. Everything is `f64` and reductions run in a fixed order,
//! so results are bitwise reproducible.

mod adam;
mod dense;
mod finite_diff;
pub mod io;
mod rng;
mod sparse;
mod tape;

pub use adam::{adam_step, AdamState};
pub use dense::{dot, DenseMatrix};
pub use finite_diff::{finite_diff_gradient, relative_error};
pub use rng::{derive_seed, sample_without_replacement, Rng};
pub use sparse::CsrMatrix;
pub use tape::{log_sum_exp, Gradients, LogitGroup, LogitTerm, Tape, Var};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected length {expected}, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("invalid CSR matrix: {0}")]
    InvalidCsr(String),
    #[error("loss must be 1x1, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("tape node {0} references a later node")]
    Cycle(usize),
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },
    #[error("cannot sample {k} items from a population of {population}")]
    SampleTooLarge { k: usize, population: usize },
    #[error("softmax group has no terms")]
    EmptyGroup,
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Self::ShapeMismatch { op, left, right }
    }
}
