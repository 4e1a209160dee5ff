use alloc::string::String;

/// Errors raised by estimators, closed forms, the differentiation tape and
/// the training loop.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid kernel width {0}: must be positive and finite")]
    InvalidKernel(f64),

    #[error("non-finite entry at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty sample matrix")]
    Empty,

    #[error("covariance is not positive definite: {0}")]
    SingularCov(String),

    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("tape contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample generation failed: {0}")]
    Generation(String),

    #[error("oracle cost guard: N={n} exceeds cap {cap}")]
    CostGuard { n: usize, cap: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
