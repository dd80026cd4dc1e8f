use std::io;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor of {requested} elements exceeds the maximum of {max}")]
    DimensionOverflow { requested: u128, max: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("could not place {objects} objects after {attempts} attempts")]
    PlacementFailure { objects: usize, attempts: usize },

    #[error("cannot reach condition number {target} (best achievable {achieved})")]
    InfeasibleConditioning { target: f64, achieved: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("conjugate gradient did not converge: relative residual {residual:e} after {iterations} iterations")]
    CgNotConverged { residual: f64, iterations: usize },

    #[error("signal has zero energy, SNR is undefined")]
    ZeroSignal,

    #[error("zero column {0} in operator matrix")]
    ZeroColumn(usize),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),

    #[error("loss became non-finite at epoch {epoch}, batch {batch} (loss = {loss})")]
    NanLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
