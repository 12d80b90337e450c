use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain box [-{half_width}, {half_width}]^{dim}")]
    Domain {
        point: Vec<f64>,
        half_width: f64,
        dim: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid mode index {mode} (model has {modes} modes)")]
    Mode { mode: usize, modes: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("integration produced a non-finite state after t = {last_valid_time}")]
    Integration { last_valid_time: f64 },
    #[error("point is off the required set: residual {residual:e} exceeds {tolerance:e}")]
    OffManifold { residual: f64, tolerance: f64 },
    #[error("wave packet geometry: {0}")]
    Geometry(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("linear solver breakdown at z = {re_z} + {im_z}i (condition estimate {condition:e}): {reason}")]
    Solver {
        re_z: f64,
        im_z: f64,
        condition: f64,
        reason: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
