use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Engine-wide error type.
///
/// The variants map onto the service's status classes: `Validation` is a
/// client input problem, `NotFound` an unknown id, `Conflict` a state clash
/// (double screening, duplicate response), and the rest are internal.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {message}")]
    Validation {
        code: &'static str,
        field: String,
        message: String,
    },

    #[error("unknown {kind} '{id}'")]
    NotFound { kind: &'static str, id: String },

    #[error("conflict: {message}")]
    Conflict { code: &'static str, message: String },

    #[error("event log corrupt at line {line}: {message}")]
    CorruptLog { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(code: &'static str, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            code,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { kind, id: id.into() }
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Error::Conflict {
            code,
            message: message.into(),
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation { code, .. } | Error::Conflict { code, .. } => code,
            Error::NotFound { .. } => "not_found",
            Error::CorruptLog { .. } => "corrupt_log",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
