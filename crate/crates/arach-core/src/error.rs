//! Crate-wide error type.
//!
//! One enum covers every failure the library can surface so callers (and the
//! CLI exit-code mapping) can match on variants instead of string contents.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes don't line up for a numeric operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An attention row whose permitted key set is empty cannot be normalized.
    #[error("attention row {row} has no permitted entries")]
    DegenerateRow { row: usize },

    /// A NaN or infinity appeared where only finite values are valid.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Vocabulary or merge files could not be read or are inconsistent.
    #[error("tokenizer load: {0}")]
    TokenizerLoad(String),

    /// `decode` was handed an id outside the vocabulary.
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),

    /// A token id outside the embedding table was fed to the model.
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    /// The checkpoint file is malformed or doesn't match the configuration.
    #[error("model load: {0}")]
    ModelLoad(String),

    /// A specific checkpoint tensor is missing, misshapen, or non-finite.
    #[error("tensor {name}: {detail}")]
    Tensor { name: String, detail: String },

    /// Input sequence exceeds what the engine can run.
    #[error("sequence length {len} exceeds limit {max}")]
    SequenceTooLong { len: usize, max: usize },

    /// A position id fell outside the learned position-embedding table.
    #[error("position id {pos} exceeds position table size {max}")]
    PositionOverflow { pos: usize, max: usize },

    /// An attention-graph description violates its invariants.
    #[error("invalid attention graph: {0}")]
    GraphSpec(String),

    /// Dataset file missing, malformed, or missing mapped fields.
    #[error("dataset: {0}")]
    Dataset(String),

    /// Run configuration is invalid or could not be parsed.
    #[error("config: {0}")]
    Config(String),

    /// An evaluation could not produce a metric (e.g. nothing scorable).
    #[error("evaluation: {0}")]
    Eval(String),

    /// Attention-trace analytics rejected its inputs.
    #[error("analytics: {0}")]
    Analytics(String),

    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Helper for wrapping `std::io::Error` with the offending path.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by configuration or the environment (missing
    /// files, bad config, malformed inputs) rather than by the evaluation
    /// itself. The CLI maps these to exit code 2 and the rest to 1.
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            Error::TokenizerLoad(_)
                | Error::ModelLoad(_)
                | Error::Tensor { .. }
                | Error::Dataset(_)
                | Error::Config(_)
                | Error::Io { .. }
        )
    }
}
