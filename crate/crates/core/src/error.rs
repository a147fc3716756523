use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor, layer, network and training operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("channel mismatch: expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op} expects a rank-{expected} tensor, got rank {got}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op} requires even spatial extents, got {h}x{w}")]
    OddExtent { op: &'static str, h: usize, w: usize },

    #[error("spatial extent {h}x{w} is not divisible by 2^{depth}")]
    Indivisible { h: usize, w: usize, depth: usize },

    #[error("index ({i}, {j}) out of range for {h}x{w}")]
    IndexOutOfRange { i: usize, j: usize, h: usize, w: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("i/o error on {path}")]
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
