//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state or right-hand-side evaluation produced a non-finite value.
    #[error("numeric failure at t = {t}: {detail}")]
    NumericFailure { t: f64, detail: String },

    /// The adaptive step size collapsed below the representable resolution.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// No periodic steady state was found within the beat budget.
    #[error("no periodic steady state after {beats} beats (residual {delta:e})")]
    NonConvergence { beats: usize, delta: f64 },

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A statistical routine received a sample it cannot work with.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Rejection sampling could not reach the target acceptance ratio.
    #[error("uncertainty sampling failed: {0}")]
    UqFailure(String),

    /// Malformed configuration, parameter file or cohort file.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical integration itself (as opposed to
    /// bad inputs or statistics).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure { .. }
                | Error::StepSizeUnderflow { .. }
                | Error::NonConvergence { .. }
        )
    }
}
