use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zonal kernel requires unit-norm inputs, got norm {norm}")]
    NotUnitNorm { norm: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cannot parse kernel spec: {0}")]
    KernelSpecParse(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}: no points")]
    EmptyPointSet(PathBuf),

    #[error("non-finite state encountered at step {step}")]
    NonFinite { step: usize },

    #[error("need at least 2 usable points for a slope fit, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate fit: all abscissae equal")]
    DegenerateFit,

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
