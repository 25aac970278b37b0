use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown model `{0}` (expected one of pilotnet, deepest_lstm_tiny_pilotnet, pilotnet_x3, memdccp)")]
    UnknownModel(String),

    #[error("weights were saved for model `{found}` but `{expected}` was requested")]
    ModelMismatch { expected: String, found: String },

    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unsupported {what} format version {found} (this reader handles version {expected})")]
    Version {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated {0}")]
    Truncated(String),

    #[error("checksum mismatch in payload chunk {chunk}")]
    Checksum { chunk: usize },

    #[error("invalid track `{name}`: {reason}")]
    InvalidTrack { name: String, reason: String },

    #[error("point is off track ({distance:.2} m from the centerline)")]
    OffTrack { distance: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
