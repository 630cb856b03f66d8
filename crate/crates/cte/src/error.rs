use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation precondition was violated (fully masked softmax row,
    /// non-scalar backward seed, mismatched parameter shapes, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid data handed to an operation (empty slice, out-of-range
    /// segment bounds, degenerate label sets, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Invalid or inconsistent configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// A manifest or config file failed to parse; carries the location.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A referenced resource (utterance features, checkpoint tensor) is missing.
    #[error("lookup failed: {0}")]
    Lookup(String),

    /// A NaN or infinity surfaced where the numerics contract requires
    /// finite values; training aborts on this rather than continuing.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Two evaluations of a supposedly deterministic function disagreed.
    #[error("non-deterministic function: {0}")]
    Determinism(String),

    /// Malformed or incompatible checkpoint / feature file.
    #[error("file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
