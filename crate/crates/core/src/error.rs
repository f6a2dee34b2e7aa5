use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("alignment failure for utterance {utt}: {reason}")]
    AlignmentFailure { utt: String, reason: String },

    #[error("decode failure for utterance {0}: no complete hypothesis")]
    DecodeFailure(String),

    #[error("word not in lexicon: {0}")]
    OutOfVocabulary(String),

    #[error("unknown unit: {0}")]
    UnknownUnit(String),

    #[error("empty urn for state {state}{}", speaker.as_ref().map(|s| format!(", speaker {s}")).unwrap_or_default())]
    EmptyUrn { state: u32, speaker: Option<String> },

    #[error("missing alignment for utterance {0}")]
    MissingAlignment(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("disconnected lattice: {0}")]
    DisconnectedLattice(String),

    #[error("format error in {context}: {reason}")]
    Format { context: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            reason: reason.into(),
        }
    }
}
