use thiserror::Error;

use crate::escrow::LedgerError;
use crate::solver::Status;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("location {index} out of range for a city of {n} locations")]
    LocationOutOfRange { index: usize, n: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("solver finished with status {0:?}")]
    Solver(Status),

    #[error("plan was computed against ledger version {plan}, ledger is at {ledger}")]
    StalePlan { plan: u64, ledger: u64 },

    #[error(transparent)]
    Ledger(#[from] LedgerError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
