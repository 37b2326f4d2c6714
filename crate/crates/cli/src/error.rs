use std::path::PathBuf;
use std::process::ExitCode;

use deconv_core::DeconvError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl From<DeconvError> for CliError {
    fn from(e: DeconvError) -> Self {
        match e {
            DeconvError::Config(msg) => CliError::Config(msg),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Numeric(_) => 4,
        })
    }
}
