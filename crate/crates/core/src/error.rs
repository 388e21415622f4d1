use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed arguments the operation cannot accept (empty axis, bad range...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An operation was invoked in a state where its contract does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The packet pool has no configuration for a band required by the pattern.
    #[error("pool has no configuration covering band {band} at wanted power {wanted_dbm} dBm")]
    Coverage { band: String, wanted_dbm: f64 },

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("failed to load {}: {reason}", path.display())]
    Load { path: PathBuf, reason: String },

    /// A pipeline stage was run before the stage that produces its input.
    #[error("missing upstream artifact {} (run `{stage}` first)", path.display())]
    MissingStage { stage: String, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by how the tool was invoked rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::Config(_))
    }
}
