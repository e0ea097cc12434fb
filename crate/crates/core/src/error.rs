use thiserror::Error;

/// Errors raised by the tensor-ring pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrError {
    #[error("index {value} at position {position} is outside [1, {n}]")]
    IndexOutOfRange {
        position: usize,
        value: usize,
        n: usize,
    },

    #[error("multi-index has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape {shape:?} does not match data length {len}")]
    ShapeMismatch { shape: Vec<usize>, len: usize },

    #[error("invalid dimension split: {0}")]
    InvalidSplit(String),

    #[error("bond mismatch between core {left} (right rank {right_rank}) and core {right} (left rank {left_rank})")]
    BondMismatch {
        left: usize,
        right: usize,
        right_rank: usize,
        left_rank: usize,
    },

    #[error("dimension count {0} is not of the form 3*2^L")]
    UnsupportedDimension(usize),

    #[error("dense budget exceeded: {entries} entries requested, budget {budget}")]
    BudgetExceeded { entries: u128, budget: u128 },

    #[error("reference values are identically zero on the evaluation set")]
    ZeroReference,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ring parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, TrError>;
