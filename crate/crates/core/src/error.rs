use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty payload: histogram has no counts")]
    EmptyPayload,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("load error for {}: {msg}", path.display())]
    Load { path: PathBuf, msg: String },

    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("defense error: {0}")]
    Defense(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
