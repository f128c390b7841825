use thiserror::Error;

/// Failure classes, each mapped to a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Schema, gate, threshold or consistency failure (exit 2).
    #[error("{0}")]
    Validation(String),
    /// A run diverged (exit 3).
    #[error("run diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: u64, reason: String },
    /// Reading or writing files failed (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence { .. } => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<momsync_core::Error> for CliError {
    fn from(e: momsync_core::Error) -> Self {
        use momsync_core::Error;
        match e {
            Error::Diverged { iteration, reason } => CliError::Divergence { iteration, reason },
            Error::Io(err) => CliError::Io(err.to_string()),
            Error::Csv(err) if err.is_io_error() => CliError::Io(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
