use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size guard exceeded: {what} needs {requested} entries, limit is {limit}")]
    GuardExceeded {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state underflow: all amplitudes vanished (check domain and beta)")]
    Underflow,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown potential key {0:?}")]
    UnknownPotential(String),

    #[error("eigensolver did not converge after {iterations} applications (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dense linear algebra failed: {0}")]
    LinearAlgebra(String),

    #[error("filtered state norm {norm:e} is below the post-selection floor {floor:e}")]
    PostSelectionFloor { norm: f64, floor: f64 },

    #[error("polynomial recurrence diverged at step {step} (norm {norm:e}); is the operator normalized by alpha?")]
    RecurrenceOverflow { step: usize, norm: f64 },

    #[error("trace drift {drift:e} exceeds {limit:e} at t = {time}; reduce the time step")]
    TraceDrift { drift: f64, limit: f64, time: f64 },

    #[error("chain diverged at step {step}: |x| = {norm:e}")]
    Divergence { step: usize, norm: f64 },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
