//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("stale or missing forward cache: {0}")]
    StaleCache(String),

    #[error("insufficient replay memory: {0}")]
    InsufficientMemory(String),

    /// Training produced a non-finite loss; carries the position so runs
    /// can be diagnosed from logs alone.
    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Divergence {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("session integrity violation: {0}")]
    SessionIntegrity(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("featurize error: {0}")]
    Featurize(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("incompatible artifacts: {0}")]
    IncompatibleArtifacts(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
