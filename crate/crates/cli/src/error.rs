//! CLI errors and their process exit codes.

use std::path::Path;

use uq_core::UqError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] UqError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Manifest hashes no longer match the files on disk.
    #[error("{0}")]
    Verification(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// `2` usage (bad flags, config or mismatched inputs), `3` format
    /// (unreadable files, integrity failures), `4` numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
            CliError::Io { .. } | CliError::Verification(_) => EXIT_FORMAT,
            CliError::Context { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                UqError::Format { .. } => EXIT_FORMAT,
                UqError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
                UqError::Io(_) => EXIT_FORMAT,
                UqError::Divergence { .. } | UqError::Training { .. } | UqError::Consistency(_) => {
                    EXIT_NUMERICAL
                }
                UqError::KindMismatch { .. }
                | UqError::InvalidValue(_)
                | UqError::Shape(_)
                | UqError::EmptyInput(_)
                | UqError::Config(_) => EXIT_USAGE,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a file path to errors from core readers.
pub trait WithPath<T> {
    fn with_path(self, path: &Path) -> CliResult<T>;
}

impl<T> WithPath<T> for Result<T, UqError> {
    fn with_path(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| CliError::Core(e).context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::usage("x").exit_code(), 2);
        assert_eq!(CliError::from(UqError::Shape("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(UqError::Format { offset: 3, message: "x".into() }).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(UqError::Training { member: 0, epoch: 1 })
                .context("stage train")
                .exit_code(),
            4
        );
        assert_eq!(CliError::Verification("x".into()).exit_code(), 3);
    }
}
