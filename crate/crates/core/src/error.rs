use thiserror::Error;

/// Errors produced by the library. Each variant maps to one failure category
/// so callers (and the CLI exit codes) can tell them apart.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
