use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("unsupported network structure: {0}")]
    UnsupportedStructure(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("config hash mismatch: artifact has {artifact}, current config has {current}")]
    ConfigHashMismatch { artifact: String, current: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
