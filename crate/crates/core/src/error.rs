use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented bounds.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("image is {width}x{height}, smaller than the {required}x{required} window")]
    FrameTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    SizeMismatch {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("frame index {got} arrived after {last}; frames must be strictly increasing")]
    OutOfOrder { last: usize, got: usize },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("frame {index} ({path}): {reason}")]
    FrameDecode {
        index: usize,
        path: PathBuf,
        reason: String,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by how the tool was invoked rather than by the
    /// data it was given.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter { .. })
    }
}
