use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rotation axis must be a unit vector (norm = {norm})")]
    NonUnitAxis { norm: f64 },

    #[error("asymmetry undefined: total count is zero")]
    ZeroCounts,

    #[error(
        "quadrature undersampled: {nodes} nodes for xi*delta = {xi_delta}; \
         use at least {required} nodes"
    )]
    InsufficientNodes {
        nodes: usize,
        required: usize,
        xi_delta: f64,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(
        "cycle {index}: |asymmetry| = {asymmetry} >= visibility {visibility}, phase cannot be resolved"
    )]
    PhaseUnresolvable {
        index: u64,
        asymmetry: f64,
        visibility: f64,
    },

    #[error("cycle records do not form a polarity pair at index {index}")]
    UnpairedPolarity { index: u64 },

    #[error("profile likelihood did not converge: {0}")]
    NonConvergent(String),
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
