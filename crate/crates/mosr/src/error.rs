//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("triplet sampling error: family {family:?} has fewer than 2 train samples")]
    SingletonFamily { family: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("family {0:?} has no samples")]
    EmptyFamily(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(
        "non-finite loss at step {step}: cls={cls}, disc={disc}, excl={excl}, total={total}"
    )]
    NonFiniteLoss {
        step: usize,
        cls: f64,
        disc: f64,
        excl: f64,
        total: f64,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
