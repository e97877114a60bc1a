use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("unsupported angular channel l = {0} (supported: 0, 1, 2)")]
    UnsupportedChannel(usize),

    #[error("no reliable bound state: e_ground = {e_ground:.3e} >= -1e-3")]
    NoBoundState { e_ground: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { what: String, iterations: usize, residual: f64 },

    #[error("invariant `{check}` violated{}: {detail}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Invariant { check: String, step: Option<usize>, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation { field: field.to_string(), message: message.into() }
    }

    pub fn invariant(check: &str, step: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Invariant { check: check.to_string(), step, detail: detail.into() }
    }

    /// Process exit status associated with this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Config { .. } | Error::UnsupportedChannel(_) | Error::Grid(_) => 2,
            _ => 1,
        }
    }
}
