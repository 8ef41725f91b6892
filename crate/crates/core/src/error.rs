use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("degenerate rotation: quaternion sum has zero norm for primitive {index}")]
    DegenerateRotation { index: usize },

    #[error("empty scene: {0}")]
    EmptyScene(String),

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("checkpoint header is corrupt: {0}")]
    CorruptHeader(String),

    #[error("checkpoint payload truncated: {0}")]
    Truncated(String),

    #[error("checkpoint checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },

    #[error("checkpoint format version mismatch: file has version {found}, reader supports version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable tag used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Shape { .. } => "shape",
            Error::DegenerateRotation { .. } => "degenerate_rotation",
            Error::EmptyScene(_) => "empty_scene",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::UnknownTask(_) => "unknown_task",
            Error::IndexOutOfRange(_) => "index_out_of_range",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::CorruptHeader(_) => "corrupt_header",
            Error::Truncated(_) => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::VersionMismatch { .. } => "version_mismatch",
        }
    }
}
