//! Shared error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UprightError {
    #[error("angle out of range: {name} = {value} not in [-90, 90]")]
    AngleOutOfRange { name: &'static str, value: f64 },

    #[error("invalid grid: height {height}, width {width} (need width = 2*height, height >= 2)")]
    InvalidGrid { height: usize, width: usize },

    #[error("pixel ({u}, {v}) outside {width}x{height} grid")]
    PixelOutOfGrid { u: f64, v: f64, height: usize, width: usize },

    #[error("zero-length vector cannot be projected")]
    ZeroVector,

    #[error("shape mismatch: {context} ({lhs} vs {rhs})")]
    ShapeMismatch { context: &'static str, lhs: String, rhs: String },

    #[error("angle range {min}..{max} with step {step} does not produce an integer grid")]
    BadAngleGrid { min: f64, max: f64, step: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("bad file format in {path}: {reason}")]
    BadFormat { path: PathBuf, reason: String },

    #[error("LUT value {value} at flat index {index} outside [-1, 1]")]
    LutValueOutOfRange { value: f32, index: usize },

    #[error("normalized angle {value} outside [0, 1]")]
    NormalizedOutOfRange { value: f64 },

    #[error("dataset too small: {n} samples cannot populate all splits and styles")]
    DatasetTooSmall { n: usize },

    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl UprightError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UprightError::Io { path: path.into(), source }
    }
}
