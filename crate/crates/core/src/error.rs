use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,

    /// Raised when the high-speed tire model is evaluated at a standstill.
    #[error("longitudinal speed {speed} too small for the high-speed tire model")]
    SpeedGuard { speed: f64 },

    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("simulation diverged at t = {time} for cubature point {index}")]
    CubatureDivergence { index: usize, time: f64 },

    #[error("simulation diverged for k = {k:?}, theta = {theta:?} in interval {interval}")]
    SampleDivergence {
        k: alloc::vec::Vec<f64>,
        theta: alloc::vec::Vec<f64>,
        interval: usize,
    },

    #[error("posterior mass underflowed on the evaluation grid; recompute in log space")]
    PosteriorUnderflow,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
