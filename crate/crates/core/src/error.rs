use thiserror::Error;

/// Errors produced by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("Fock truncation error: tail mass {tail:.3e} exceeds tolerance {tolerance:.1e} at cutoff {cutoff}")]
    Truncation {
        cutoff: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("linear program infeasible; violated constraints: {}", .violated.join(", "))]
    Infeasible { violated: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot merge counts: {0}")]
    Merge(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
