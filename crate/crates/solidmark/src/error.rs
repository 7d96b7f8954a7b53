//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, model training, outpainting and
/// evaluation.
#[derive(Error, Debug)]
pub enum Error {
    /// Invalid configuration value (dimensions, ranges, unknown names).
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor/image shape mismatch.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Dataset integrity violation (duplicate ids, missing key entries).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Lookup of an unknown id.
    #[error("lookup error: unknown id `{0}`")]
    Lookup(String),

    /// Mathematical domain violation (empty input, mask with no pixels).
    #[error("domain error: {0}")]
    Domain(String),

    /// Degenerate input that would force a division by zero; callers must
    /// handle exact-duplicate floods explicitly instead of reading +inf.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Model produced or contains non-finite values.
    #[error("model error: {0}")]
    Model(String),

    /// Training failure, with the step index where it occurred.
    #[error("training error at step {step}: {message}")]
    Training { step: usize, message: String },

    /// Embedder contract violation (non-finite or degenerate embedding).
    #[error("embedder error: {0}")]
    Embedder(String),

    /// Keymap file absent where keys are required; keys are never silently
    /// regenerated.
    #[error("keymap absent: {0}")]
    KeymapAbsent(String),

    /// Manifest or report parse failure, pointing at the offending record.
    #[error("parse error in {path} (record {record}): {message}")]
    Parse {
        path: String,
        record: usize,
        message: String,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
