use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or validating a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: file contains no samples")]
    Empty { path: PathBuf },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: row has {found} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("label {label} is outside the class range [0, {n_classes})")]
    LabelOutOfRange { label: i64, n_classes: usize },
    #[error("ambiguous label scheme {labels:?}: labels must be 0..K-1 or 1..K")]
    AmbiguousLabels { labels: Vec<i64> },
    #[error("training set is missing class {class} (K = {n_classes})")]
    MissingClass { class: usize, n_classes: usize },
    #[error("need at least 3 classes, found {0}")]
    TooFewClasses(usize),
    #[error("feature value at sample {sample}, feature {feature} is not finite")]
    NonFinite { sample: usize, feature: usize },
    #[error("{0}")]
    Shape(String),
}

/// Errors raised by the boosting trainers.
#[derive(Debug, Error)]
pub enum BoostError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("test set has {found} features, training set has {expected}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Errors raised when scoring, saving or loading an ensemble.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sample has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("requested {requested} stages but the model has {available}")]
    StageOutOfRange { requested: usize, available: usize },
    #[error("unsupported model format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("stage {stage}: {message}")]
    Shape { stage: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
}
