use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the point-cloud, feature and registration routines.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested {requested} items but only {available} are available")]
    TooFew { requested: usize, available: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("zero surviving channels at hop {hop}")]
    ZeroSurvivingChannels { hop: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("no correspondences left after filtering")]
    EmptyCorrespondences,

    #[error("ransac found no hypothesis with at least 3 inliers")]
    RansacFailed,

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
