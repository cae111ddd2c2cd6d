use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A documented precondition or invariant does not hold.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("matrix is not invertible: {0}")]
    NotInvertible(String),

    #[error("rank-deficient data: {0}")]
    RankDeficient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no accessibility threshold in [{lo}, {hi}]")]
    NoThreshold { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, Error::ContractViolation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
