use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid simulation setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("positions are not ordered: distance {index} is {value}")]
    UnorderedPositions { index: usize, value: f64 },

    #[error("no stationary distribution exists: the relaxation rate gamma must be > 0 (got {gamma})")]
    NoStationaryDistribution { gamma: f64 },

    #[error("limit covariance undefined: beta must be > 0 (got {beta})")]
    LimitUndefined { beta: f64 },

    #[error("dense eigensolver: {0}")]
    EigenSolver(String),

    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the user's input rather than by a numerical check.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidConfig { .. }
                | Error::Syntax { .. }
                | Error::NoStationaryDistribution { .. }
                | Error::LimitUndefined { .. }
                | Error::UnorderedPositions { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
