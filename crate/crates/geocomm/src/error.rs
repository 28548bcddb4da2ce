//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph loading, matrix construction and model fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// A snapshot or sequence violates a structural invariant.
    #[error("invalid graph data: {0}")]
    InvalidGraph(String),

    /// An input file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Dimensions of an argument do not match the operation's contract.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A method was asked to run on data it does not support.
    #[error("method not applicable: {0}")]
    NotApplicable(String),

    /// A numerical routine could not proceed (rank deficiency, singular
    /// arguments, degenerate accumulations).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
