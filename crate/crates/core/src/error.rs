use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("fusion schedule has a cycle: {0}")]
    Cycle(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint tensor `{tensor}`: {detail}")]
    Checkpoint { tensor: String, detail: String },

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status for the command-line tool: 1 for bad settings,
    /// 2 for unreadable or inconsistent data, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Cycle(_) | Error::Numeric(_) => 3,
            Error::Shape { .. }
            | Error::Data(_)
            | Error::Checkpoint { .. }
            | Error::CheckpointFormat(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
        }
    }
}
