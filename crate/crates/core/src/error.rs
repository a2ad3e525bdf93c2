//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the pipeline. Fatal conditions (shape mismatches,
/// malformed inputs) are errors; recoverable data issues (an unparseable
/// record, a conflicting propagation) are reported through side channels and
/// never abort a run.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown action class {0:?}")]
    UnknownAction(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(context: &str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        CoreError::ShapeMismatch {
            context: context.to_string(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}
