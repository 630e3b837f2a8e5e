use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index:?} out of range for mode sizes {mode_sizes:?}")]
    IndexOutOfRange { index: Vec<usize>, mode_sizes: Vec<usize> },

    #[error("point {point:?} lies outside the grid box [{lo}, {hi}]")]
    OutsideDomain { point: Vec<f64>, lo: f64, hi: f64 },

    #[error("non-finite function value at index {index:?}")]
    NonFinite { index: Vec<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("conditional density has non-positive mass after sampling prefix {prefix:?}")]
    Sampling { prefix: Vec<f64> },

    #[error("optimal cost is zero while the encoder cost is {cost_encoder:e}")]
    DegenerateCost { cost_encoder: f64 },

    #[error("boundary certificate failed after {rescales} rescales (ratio {ratio:e})")]
    Certificate { rescales: usize, ratio: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
