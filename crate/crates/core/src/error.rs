use thiserror::Error;

use crate::forward::Solution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    /// The solver gave up; the best iterate found so far is kept.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    ConvergenceFailure {
        best: Box<Solution>,
        residual: f64,
        iterations: usize,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return invalid(format!("exponent p must lie in (1, inf), got {p}"));
    }
    Ok(())
}
