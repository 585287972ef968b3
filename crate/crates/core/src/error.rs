use thiserror::Error;

use crate::stoq::CompiledSequence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The ideal distribution is (numerically) uniform, so the XEB
    /// normalization vanishes.
    #[error("degenerate distribution: sum of squared ideal probabilities equals 1/N")]
    DegenerateDistribution,

    #[error("decay fit is degenerate: {0}")]
    FitDegenerate(String),

    /// `compile_until` used up its restart budget. Carries the lowest-error
    /// attempt so callers can still inspect or keep it.
    #[error("restart budget exhausted after {attempts} attempt(s); best inversion error {best_error:.6}")]
    BudgetExceeded {
        attempts: usize,
        best_error: f64,
        best: Box<CompiledSequence>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
