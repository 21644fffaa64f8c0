use std::fmt;

use crate::map::MapKind;

/// Errors raised by the uncertainty toolkit.
#[derive(Debug, thiserror::Error)]
pub enum UqError {
    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: MapKind, found: MapKind },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("chain diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("training of member {member} diverged at epoch {epoch}: non-finite loss")]
    Training { member: usize, epoch: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl UqError {
    pub(crate) fn shape(msg: impl fmt::Display) -> Self {
        UqError::Shape(msg.to_string())
    }

    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        UqError::InvalidValue(msg.to_string())
    }

    pub(crate) fn config(msg: impl fmt::Display) -> Self {
        UqError::Config(msg.to_string())
    }

    pub(crate) fn format(offset: usize, msg: impl fmt::Display) -> Self {
        UqError::Format {
            offset,
            message: msg.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, UqError>;
