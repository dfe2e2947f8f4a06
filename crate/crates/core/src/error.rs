use std::path::PathBuf;

/// Errors produced across the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record {id}: {reason}")]
    Record { id: String, reason: String },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("checkpoint tensor `{name}`: {reason}")]
    Checkpoint { name: String, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input data rather than runtime failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::Record { .. } | Error::Format { .. } | Error::Checkpoint { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
