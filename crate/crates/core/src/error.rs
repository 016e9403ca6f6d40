use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point is not in the cone with apex {apex:?}")]
    NotInCone { apex: Vec<f64> },
    #[error("point is not in E (distance {distance})")]
    NotInSet { distance: f64 },
    #[error("no radius with small boundary found in [{lo}, {hi}]")]
    NotFound { lo: f64, hi: f64 },
    #[error("too few samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("whitney cover is empty: covered mass {covered} below required {required}")]
    EmptyCover { covered: f64, required: f64 },
    #[error("property violated: {0}")]
    Violation(String),
    #[error("power iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Scenario(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
