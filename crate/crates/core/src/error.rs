use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {message} (residuals: {residuals:?})")]
    NumericalFailure { message: String, residuals: Vec<f64> },

    #[error("unsupported form: {0}")]
    UnsupportedForm(String),

    /// A standing-assumption violation: a region state is mapped to the origin.
    #[error("assumption A1 violated in region {region}: {message}")]
    AssumptionViolation { region: usize, message: String },

    #[error("region {region} looks empty: no accepted sample in {attempts} draws")]
    EmptyRegion { region: usize, attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
