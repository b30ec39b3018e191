//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by corpus construction, modeling, training and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// Clip indices are 1-based; 0 is never valid.
    #[error("clip index must be >= 1 (got {0})")]
    InvalidIndex(usize),

    #[error("window {index} ends at {t_end}s, beyond the {duration_s}s timeline")]
    WindowOutOfBounds {
        index: usize,
        t_end: f64,
        duration_s: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("signal shorter than one analysis frame")]
    EmptySignal,

    #[error("modality {0} is not present on this timeline")]
    MissingModality(&'static str),

    #[error("no unmasked modality tokens to process")]
    NoModality,

    #[error("expected a dyadic track with at most two speakers, found {0:?}")]
    NonDyadic(Vec<String>),

    #[error("not enough {category} clips: requested {requested}, available {available}")]
    Shortfall {
        category: String,
        requested: usize,
        available: usize,
    },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("shape mismatch for {name}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("alignment pretraining needs a batch with at least two clips and two modalities")]
    AlignmentNotApplicable,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
