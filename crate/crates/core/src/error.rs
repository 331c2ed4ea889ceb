//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lex error at byte {offset}: {reason}")]
    Lex { offset: usize, reason: String },

    #[error("malformed analyzer report line {line_no}: {content:?}")]
    ReportParse { line_no: usize, content: String },

    #[error("unknown check category for id {check_id:?}")]
    UnknownCategory { check_id: String },

    #[error("analyzer unavailable: {reason}")]
    AnalyzerUnavailable { reason: String },

    #[error("analyzer timed out after {seconds}s on {path}")]
    AnalyzerTimeout { path: PathBuf, seconds: u64 },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("cannot orient pair {task_id}: candidate scores are equal ({score})")]
    Orientation { task_id: String, score: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sequence length {len} exceeds model context {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("token {text:?} is not in the vocabulary")]
    UnknownToken { text: String },

    #[error("instruction must contain at least one token")]
    EmptyInstruction,

    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("shape mismatch for {name}: expected {expected}, found {found}")]
    ShapeMismatch {
        name: String,
        expected: String,
        found: String,
    },

    #[error("task sets differ between arms: {reason}")]
    TaskAlignment { reason: String },

    #[error("bad record in {path} at line {line_no}: {reason}")]
    RecordFormat {
        path: PathBuf,
        line_no: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
