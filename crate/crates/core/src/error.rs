use thiserror::Error;

/// Errors raised by the distribution, coupling and bound routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("probability vector is empty")]
    EmptyProbVector,

    #[error("p[{index}] = {value} is outside (0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("truncation tail {tail:e} exceeds {limit:e}; truncate finer first")]
    TailTooLarge { tail: f64, limit: f64 },

    #[error("`{0}` is not evaluable without caller-supplied constants")]
    NotEvaluable(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
