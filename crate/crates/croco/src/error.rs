//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model, data, noise, estimation, and generation code.
///
/// `Config` and `Schema` indicate a problem with user-supplied configuration
/// or input files; everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Invalid configuration value (out-of-domain parameter, unreachable target, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violated the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A file could not be parsed; the message names the offending field.
    #[error("parse error: {0}")]
    Parse(String),

    /// An operation's precondition did not hold for the given inputs.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by user configuration or input files rather
    /// than runtime state. The CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Schema(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
