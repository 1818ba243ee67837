use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample size must be even to split, got {0}")]
    OddSample(usize),

    #[error("problem mismatch: {0}")]
    ProblemMismatch(&'static str),

    #[error("null covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e}); increase lambda")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
