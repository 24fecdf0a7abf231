//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error enum. CLI exit codes map `InvalidConfig`-class errors
/// to 1 and `DegenerateScenario` to 2.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A run configuration is structurally valid but semantically unusable.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An input file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A lookup fell outside the span of the loaded data.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// An operation was called on inputs that violate its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The search anchor endpoint failed its own trial batch, so no
    /// certified result exists anywhere in the interval.
    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config deserialization: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("config serialization: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("json serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
