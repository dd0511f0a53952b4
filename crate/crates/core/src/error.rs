use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("structure maps do not define an H-type group: {0}")]
    NotHType(String),

    #[error("point {0:?} is the singular point of the homogeneous norm")]
    SingularPoint(Vec<f64>),

    #[error("non-finite integrand value {value} at node {node}")]
    Evaluation { node: usize, value: f64 },

    #[error("test function vanishes on the mesh (denominator {0})")]
    DegenerateTestFunction(f64),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("quadrature under-resolved: {0}")]
    Resolution(String),

    #[error("evolution diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("zero margin: the elementary inequality degenerates for w1 = w2")]
    ZeroMargin,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
