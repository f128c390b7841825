use thiserror::Error;

use crate::topology::MixingViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not symmetric: |M[{row}][{col}] - M[{col}][{row}]| = {deviation:e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown worker {worker} (problem has {num_workers} workers)")]
    UnknownWorker { worker: usize, num_workers: usize },

    #[error("mixing matrix rejected: {0}")]
    Topology(#[from] MixingViolation),

    #[error("hyperparameter gate violated: {0}")]
    Gate(String),

    #[error("horizon threshold violated: {0}")]
    Threshold(String),

    #[error("run diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },

    #[error("{identity} residual {residual:e} exceeds {tolerance:e} at iteration {iteration}")]
    IdentityResidual {
        identity: &'static str,
        iteration: u64,
        residual: f64,
        tolerance: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
