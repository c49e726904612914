//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The source corner configuration cannot determine an affine transform
    /// (collinear or coincident points). Callers usually treat the part as empty.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The affine transform cannot be inverted for warping.
    #[error("singular transform: {0}")]
    SingularTransform(String),

    /// A saved forward context does not match the backward call.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    TrainingDiverged { iteration: u64, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape_mismatch(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
