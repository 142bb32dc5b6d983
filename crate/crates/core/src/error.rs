use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },
    #[error("query {id} evaluated to {value}, outside bound {bound}")]
    BoundViolation { id: String, value: f64, bound: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("enumeration of {size} elements exceeds cap {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("unsupported query/instance pairing: {0}")]
    Unsupported(String),
    #[error("incomplete transcript: {0}")]
    IncompleteTranscript(String),
    #[error("stage ordering violation: {0}")]
    StageOrdering(String),
    #[error("covering net on support {support:?} has {size} elements, bound is {bound}")]
    NetOverflow { support: Vec<usize>, size: usize, bound: f64 },
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("covariance is not symmetric positive definite")]
    NotSpd,
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("truncation bias {bias:.3e} exceeds 1/n = {limit:.3e}")]
    TruncationBias { bias: f64, limit: f64 },
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("bisection bracket failure: {0}")]
    Bracket(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
