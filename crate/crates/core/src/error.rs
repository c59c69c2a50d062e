use thiserror::Error;

use crate::autodiff::OpKind;

#[derive(Debug, Error)]
pub enum Error {
    /// A jet or tape primitive was applied outside its domain.
    #[error("domain error in `{primitive}`: {detail}")]
    Domain {
        primitive: &'static str,
        detail: String,
    },

    #[error("non-finite value at tape node {node} ({op:?})")]
    NonFinite { node: usize, op: OpKind },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("non-finite target for sample {sample}")]
    NonFiniteTarget { sample: usize },

    #[error("non-finite training loss at epoch {epoch}, inner step {inner_step}: {loss}")]
    NonFiniteLoss {
        epoch: usize,
        inner_step: usize,
        loss: f64,
    },

    #[error("problem `{0}` is nonlinear; use the log-transform estimator (hjb_log_mc) or another reference")]
    NonLinearProblem(String),

    #[error("Monte Carlo mean {mean} is not positive; log is undefined (try more paths)")]
    NonPositiveMean { mean: f64 },

    #[error("unknown reference tag `{0}`")]
    UnknownTag(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(primitive: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            primitive,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
