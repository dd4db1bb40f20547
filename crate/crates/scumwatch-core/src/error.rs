//! Error type shared by all pipeline stages.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Raster or grid geometry does not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Wrong number of per-patch probability vectors for the grid.
    #[error("expected {expected} patch probabilities, got {got}")]
    CountMismatch { expected: usize, got: usize },

    /// The background mask leaves no river pixels to divide by.
    #[error("river region has zero pixels")]
    EmptyRiver,

    /// Training set is missing at least one of the three classes.
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    /// Metrics requested over zero evaluated samples.
    #[error("empty evaluation set")]
    EmptySet,

    /// Training diverged.
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// Serialized model is malformed or from an unknown version.
    #[error("model format: {0}")]
    ModelFormat(String),

    /// Dataset manifest is malformed.
    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}
