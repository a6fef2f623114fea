use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on numeric input was violated (empty signal, bad band, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A file or byte stream does not follow the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// Recognised container, but a codec or variant we do not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The label cannot be aligned to the given number of frames.
    #[error("infeasible CTC alignment: label needs {needed} frames, got {frames}")]
    Infeasible { needed: usize, frames: usize },

    /// Model or experiment configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Text normalisation left nothing to score or train on.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// A manifest record could not be resolved.
    #[error("load error in record {record}: {message}")]
    Load { record: String, message: String },

    /// Training produced non-finite losses for too many consecutive steps.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
pub(crate) use domain;
