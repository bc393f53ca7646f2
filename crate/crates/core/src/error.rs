use thiserror::Error;

/// Error type shared across the audit engine.
#[derive(Debug, Error)]
pub enum AuditError {
    /// The design document violates its own invariants or does not bind to
    /// the unit table. The message lists every violation.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// Malformed or inconsistent input data, with row/column location where
    /// available.
    #[error("data error: {0}")]
    Data(String),

    /// Bad engine or config arguments (fold counts, resample counts, shapes).
    #[error("config error: {0}")]
    Config(String),

    /// Vector or matrix shape mismatch between paired inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Learner could not be fitted (empty training set and similar).
    #[error("learner error: {0}")]
    Learner(String),

    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("failed to parse JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, AuditError>;
