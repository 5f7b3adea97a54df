use thiserror::Error;

/// Errors produced by model construction, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("type index {index} out of range for a {types}-type model")]
    TypeIndex { index: usize, types: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("exposure out of range: {0}")]
    Exposure(String),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("monotone iteration violated at step {iteration} (component {component})")]
    NonMonotone { iteration: usize, component: usize },

    #[error("U is numerically singular (det = {det:e}); the model is likely near-critical")]
    SingularU { det: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NonMonotone { .. } | Error::SingularU { .. }
        )
    }
}
