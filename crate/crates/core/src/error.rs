use thiserror::Error;

use crate::discretization::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NumericalFailure { what: String, residual: f64 },

    #[error("conjugate solve failed on time slice {slice} (residual {residual:e})")]
    ConjugateFailure { slice: usize, residual: f64 },

    #[error("model evaluation produced a non-finite value at {location}")]
    ModelEvaluation { location: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular pivot {pivot:e} at row {row}")]
    SingularMatrix { row: usize, pivot: f64 },

    #[error("implicit step {step} failed (residual {residual:e})")]
    StepFailure { step: usize, residual: f64 },

    #[error("line search stagnated after {iterations} iterations (J = {energy:e})")]
    Stagnation {
        iterations: usize,
        energy: f64,
        last: Box<Trajectory>,
    },

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
