use std::path::PathBuf;

/// Errors produced by the localization toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("path too short: need at least 2 poses, got {0}")]
    PathTooShort(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("empty dictionary: no samples survived projection")]
    EmptyDictionary,

    #[error("feature configuration mismatch: {0}")]
    FeatureConfigMismatch(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (as opposed to runtime failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::PathTooShort(_)
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Config(_)
                | Error::FeatureConfigMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
