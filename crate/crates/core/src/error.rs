use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite value {value} in `{field}` at (i={i}, j={j}, k={k})")]
    NonFinite {
        field: String,
        i: usize,
        j: usize,
        k: usize,
        value: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("poisson solve did not converge: residual {residual:.3e} after {iterations} iterations (target {target:.3e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("time step failed at t = {time}: {reason}")]
    StepFailed { time: f64, reason: String },

    #[error("incompatible boundary forcing: {0}")]
    Incompatible(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit status for the CLI: 2 for configuration and input
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::StepFailed { .. } | Error::SolverDiverged { .. } | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
