use std::path::Path;

use thiserror::Error;

/// CLI failures. Each category has its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pointscatter::Error),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// 2 usage, 3 I/O, 4 parse, then 10+ for library error categories.
    pub fn exit_code(&self) -> i32 {
        use pointscatter::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::Io { .. } => 3,
            Self::Parse(_) => 4,
            Self::Core(e) => match e {
                E::Dimension(_) => 10,
                E::Bounds(_) => 11,
                E::Parameter(_) => 12,
                E::Capacity(_) => 13,
                E::UndefinedMetric(_) => 14,
                E::Pairing(_) => 15,
                E::Contract(_) => 16,
                E::Divergence(_) => 17,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
