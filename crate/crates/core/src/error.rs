use thiserror::Error;

/// Errors raised by the estimation, inference and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeeeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not enough degrees of freedom: {0}")]
    DegreesOfFreedom(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GeeeError>;
