use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record {index}: missing {field}, required by {context}")]
    MissingField {
        index: usize,
        field: &'static str,
        context: String,
    },

    #[error("record {index}: non-finite value while evaluating {context}")]
    NonFinite { index: usize, context: String },

    #[error("unidentifiable: no labeled events")]
    NoLabeledEvents,

    #[error("quadrature did not converge: estimated error {error_estimate:e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence {
        error_estimate: f64,
        subdivisions: usize,
    },

    #[error("objective or gradient non-finite at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    #[error("minimizer failed in step {step} at outer iteration {iteration}: {source}")]
    StepFailed {
        step: &'static str,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("record {index}: event probability is zero")]
    ZeroEventProbability { index: usize },

    #[error("record {index}: hazard saturated at period {period}")]
    HazardSaturated { index: usize, period: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
