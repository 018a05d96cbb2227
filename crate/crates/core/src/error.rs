use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid matrix shape {rows}x{cols} for {len} entries")]
    BadShape {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite")]
    NotPsd,

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("matrix has no nonzero eigenvalue")]
    ZeroMatrix,

    #[error("linear system is inconsistent (residual {residual:e} > tolerance {tolerance:e})")]
    Inconsistent { residual: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("loss is zero at this point; smoothness heuristic is undefined")]
    ZeroLoss,

    #[error("mirror inversion failed at coordinate {coordinate} (target {target:e}, residual {residual:e})")]
    InversionFailed {
        coordinate: usize,
        target: f64,
        residual: f64,
    },

    #[error("mirror has no potential")]
    NoPotential,

    #[error("schedule is inadmissible: {0}")]
    InadmissibleSchedule(String),

    #[error("run diverged at t={t}: loss {loss:e} exceeds guard {guard:e}")]
    Diverged { t: usize, loss: f64, guard: f64 },

    #[error("trace did not converge: final loss {final_loss:e}, required {required:e}")]
    NotConverged { final_loss: f64, required: f64 },

    #[error("not enough positive-loss records for a rate fit ({0})")]
    TooFewRecords(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
