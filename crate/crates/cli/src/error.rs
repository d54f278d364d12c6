use resfit_core::io::IoError;
use resfit_core::{FitError, SynthError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{0}")]
    Degraded(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Degraded(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Fit(f) => CliError::Fit(f.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<resfit_core::ModelError> for CliError {
    fn from(e: resfit_core::ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}
