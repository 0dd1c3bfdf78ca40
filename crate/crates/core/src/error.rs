use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite gradient from agent {agent} at round {round}")]
    NonFiniteGradient { agent: usize, round: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { what: &'static str, iterations: usize, residual: f64 },

    #[error("matrix is not doubly stochastic (max violation {max_violation:e})")]
    NotDoublyStochastic { max_violation: f64 },

    #[error("step-size conditions violated: {0}")]
    ConditionsViolated(String),

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error("malformed data at line {line}: {reason}")]
    Data { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
