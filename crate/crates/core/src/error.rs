use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the counting toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid annotation: {0}")]
    Annotation(String),

    #[error("seed ({row}, {col}) lies outside the watershed domain")]
    SeedOutsideDomain { row: usize, col: usize },

    #[error("duplicate watershed seed at ({row}, {col})")]
    DuplicateSeed { row: usize, col: usize },

    #[error("pairing needs at least two points, got {0}")]
    TooFewPoints(usize),

    #[error("metric needs at least one record")]
    EmptyRecords,

    #[error("metric expects single-class records, got {0} object classes")]
    MultiClass(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(&'static str),

    #[error("{path}:{line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cannot read image {path}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
