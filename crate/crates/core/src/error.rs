use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("empty target")]
    EmptyTarget,
    #[error("side must be odd")]
    EvenSide,
    #[error("K must be odd")]
    EvenDepth,
    #[error("spatial shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no samples")]
    NoSamples,
    #[error("invalid training data: {0}")]
    InvalidTrainingData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u64),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("feature file not found: {}", .0.display())]
    FeatureFileNotFound(PathBuf),
    #[error("feature shape mismatch: {0}")]
    FeatureShapeMismatch(String),
    #[error("inconsistent channel count: expected {expected}, got {got}")]
    InconsistentChannels { expected: usize, got: usize },
    #[error("invalid feature sequence: {0}")]
    InvalidSequence(String),
    #[error("no frames")]
    NoFrames,
    #[error("no sequences found in {}", .0.display())]
    NoSequences(PathBuf),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("image error in {}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code used by the command-line driver.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidTensor(_) => "invalid_tensor",
            Error::EmptyTarget => "empty_target",
            Error::EvenSide => "even_side",
            Error::EvenDepth => "even_depth",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NoSamples => "no_samples",
            Error::InvalidTrainingData(_) => "invalid_training_data",
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::MalformedModel(_) => "malformed_model",
            Error::FeatureFileNotFound(_) => "feature_file_not_found",
            Error::FeatureShapeMismatch(_) => "feature_shape_mismatch",
            Error::InconsistentChannels { .. } => "inconsistent_channels",
            Error::InvalidSequence(_) => "invalid_sequence",
            Error::NoFrames => "no_frames",
            Error::NoSequences(_) => "no_sequences",
            Error::Dataset(_) => "dataset",
            Error::Image { .. } => "image",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
