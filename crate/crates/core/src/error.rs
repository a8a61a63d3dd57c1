use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}record {id:?}: invalid `{field}`: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, id: String, field: &'static str, reason: String },

    #[error("line {line}: duplicate id {id:?} (first seen on line {first_line})")]
    DuplicateId { line: usize, first_line: usize, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("text of {chars} characters does not fit a {side_px}px tile at the minimum font size")]
    Unrenderable { chars: usize, side_px: u32 },

    #[error("font: {0}")]
    Font(String),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("endpoint: {0}")]
    Endpoint(String),

    #[error("all {count} samples failed against the endpoint; partial log kept at {}", log.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<none>".into()))]
    AllSamplesFailed { count: usize, log: Option<PathBuf> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the filesystem or network rather than by
    /// malformed input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Endpoint(_) | Error::AllSamplesFailed { .. } => true,
            Error::Image(e) => matches!(e, image::ImageError::IoError(_)),
            _ => false,
        }
    }
}
