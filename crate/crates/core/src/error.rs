use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular kernel evaluated at zero separation")]
    SingularEvaluation,

    #[error("kernel is not integrable near the origin (alpha = {alpha})")]
    NonIntegrable { alpha: f64 },

    #[error("step size floor {dt_min:e} reached at t = {t} without meeting tolerance")]
    StepFloorHit { t: f64, dt_min: f64 },

    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid velocity control: {0}")]
    InvalidControl(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
