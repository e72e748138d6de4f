use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed PENMAN at byte {pos}: {msg}")]
    MalformedPenman { pos: usize, msg: String },
    #[error("unknown AMR node `{0}`")]
    UnknownNode(String),
    #[error("AMR node `{0}` has no token alignment")]
    UnalignedNode(String),
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty span")]
    EmptySpan,
    #[error("span [{start}, {end}) out of bounds for length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("degenerate label space: {0}")]
    DegenerateLabelSpace(String),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("no AMR graph for sentence `{0}`")]
    MissingAmr(String),
    #[error("length mismatch: {left} predictions vs {right} gold")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty checkpoint series")]
    EmptySeries,
    #[error("{path}:{line}: {msg}")]
    Schema {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate sentence id `{0}`")]
    DuplicateSentId(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing logs in {0}")]
    MissingLogs(PathBuf),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn penman(pos: usize, msg: impl Into<String>) -> Self {
        Error::MalformedPenman {
            pos,
            msg: msg.into(),
        }
    }
}
