use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid box [{lo}, {hi}]: bounds must be finite with lo <= hi")]
    InvalidBox { lo: f64, hi: f64 },

    #[error("invalid sample mask: {0}")]
    InvalidMask(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} is outside the domain of the {model} model")]
    Domain { model: &'static str, value: f64 },

    #[error("observation at ({row}, {col}) could not be drawn: true value {value} is outside the {model} domain")]
    ObservationDomain {
        row: usize,
        col: usize,
        value: f64,
        model: &'static str,
    },

    #[error("one-bit proximal Newton iteration did not converge after {iterations} steps (last iterate {last})")]
    ProxNotConverged { iterations: usize, last: f64 },

    #[error("dictionary factor is identically zero; the A-step has no curvature")]
    ZeroDictionary,

    #[error("linear solve failed in the D-step")]
    SingularSystem,

    #[error("singular value decomposition failed")]
    SvdFailed,

    #[error("ADMM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
