use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<ruinscan::Error> for CliError {
    fn from(e: ruinscan::Error) -> Self {
        use ruinscan::Error as E;
        match e {
            E::InvalidParameter(m) => CliError::Validation(m),
            E::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => CliError::MissingArtifact(path),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}
