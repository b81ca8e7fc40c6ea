use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate search direction: g^T A^-1 g = {0:e}")]
    DegenerateDirection(f64),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("expansion point violated: D(theta_old) = {0:e}")]
    ExpansionPoint(f64),
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
