use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("estimation failed: {0}")]
    Estimation(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

impl From<jitter_transfer::Error> for CliError {
    fn from(err: jitter_transfer::Error) -> Self {
        use jitter_transfer::Error as E;
        match err {
            E::EstimationFailed(_) | E::QuadratureNonConvergence { .. } => CliError::Estimation(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}
