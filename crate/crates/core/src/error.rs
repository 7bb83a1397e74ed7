use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Index or shape violation in the in-memory model.
    #[error("structural error: {0}")]
    Structural(String),

    /// A file header or label token does not match the expected schema.
    #[error("schema error: field `{field}`: {detail}")]
    Schema { field: String, detail: String },

    #[error("corrupt payload at byte offset {offset}: {detail}")]
    Corrupt { offset: u64, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Usage and configuration mistakes, as opposed to bad input data.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Usage(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }

    /// Process exit code: 1 for usage/config errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_usage() {
            1
        } else {
            2
        }
    }
}
