use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not factorizable: jitter {jitter:e} would exceed cap {cap:e}")]
    NotFactorizable { jitter: f64, cap: f64 },

    #[error("eigendecomposition did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no data rows supplied")]
    EmptyData,

    #[error("mixture component {component} degenerated (weight {weight:e})")]
    DegenerateComponent { component: usize, weight: f64 },

    #[error("operator {0} needs a parameter-field bundle")]
    MissingParameterField(&'static str),

    #[error("non-finite state in iteration {iteration}; the step size is probably too large")]
    NonFiniteState { iteration: usize },

    #[error("chain holds no samples")]
    EmptyChain,

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("singular linear system (pivot {0})")]
    SingularSystem(usize),

    #[error("coefficient must be positive, found {value} at grid index {index}")]
    NonPositiveCoefficient { index: usize, value: f64 },

    #[error("Newton iteration stopped after {iterations} iterations with residual {residual:e}")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("deterministic solve failed for sample {sample}: {source}")]
    SolverFailed {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
