use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LsiError>;

#[derive(Debug, Error)]
pub enum LsiError {
    /// Bad input data or arguments. Maps to exit status 1 in the CLI.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("row {row} ({entity}): non-finite value in column {col}")]
    NonFinite {
        row: usize,
        entity: String,
        col: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("no anchors: none of the domain entities has a known embedding")]
    NoAnchors,

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("vertex {vertex} is not reachable from any anchor; convergence is not guaranteed")]
    Unreachable { vertex: usize },

    #[error("weight row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<LsiError>,
    },

    #[error("I - W_qq is singular; the unknown block does not converge")]
    Singular,

    #[error("non-finite value encountered at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("system too large for {what}: {size} > {cap}")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LsiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LsiError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LsiError::Io {
            path: path.into(),
            source,
        }
    }
}
