//! Error types shared across the crate.

use thiserror::Error;

/// Errors from mask construction and geometric operations.
#[derive(Debug, Error)]
pub enum MaskError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("instances {a} and {b} overlap at pixel ({row}, {col})")]
    Overlap { a: u32, b: u32, row: usize, col: usize },
    #[error("instance {id} bbox exceeds image bounds {height}x{width}")]
    OutOfBounds { id: u32, height: usize, width: usize },
    #[error("label {0} exceeds the 16-bit limit of the label-map file format")]
    LabelOverflow(u32),
    #[error("instance has no pixels")]
    EmptyRegion,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Errors from gradient-boosting training and model parsing.
#[derive(Debug, Error)]
pub enum GbmError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature count mismatch: expected {expected}, row {row} has {got}")]
    FeatureCountMismatch { expected: usize, row: usize, got: usize },
    #[error("target {value} at row {row} outside [0, 1]")]
    TargetOutOfRange { row: usize, value: f64 },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model parse failure at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Errors from out-of-fold fusion training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Gbm(#[from] GbmError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Errors from evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} is below the 0.5 uniqueness floor")]
    ThresholdTooLow(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Errors from reading and writing mask and table files.
#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

impl FileError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        FileError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        FileError::Format { path: path.into(), reason: reason.into() }
    }
}

/// Errors from synthetic scene generation and corpus writing.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not place instance {index} after {attempts} attempts; nuclei do not fit")]
    PlacementFailed { index: usize, attempts: usize },
    #[error(transparent)]
    File(#[from] FileError),
}
