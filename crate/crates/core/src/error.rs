//! Crate-wide error type and the exit-code mapping used by the CLI.

use thiserror::Error;

/// Errors produced by graph construction, embedding lookups, rollouts,
/// training, and file I/O.
///
/// The CLI maps every variant onto one of two non-zero exit codes:
/// input/configuration problems exit with 1, numeric failures with 2.
#[derive(Debug, Error)]
pub enum CopathError {
    /// Malformed or inconsistent caller input (bad ids, empty inputs,
    /// invalid configuration values, shape mismatches...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A structured-text file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A non-finite value surfaced inside numeric code.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Filesystem access failed; the offending path is kept for diagnostics.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A checkpoint or document carries a format version this build
    /// does not understand.
    #[error("unsupported format version {found} for {kind} (supported: {supported})")]
    Version {
        kind: String,
        found: u32,
        supported: u32,
    },
}

pub type Result<T> = std::result::Result<T, CopathError>;

impl CopathError {
    /// Process exit code for the CLI: 1 for input errors, 2 for numeric
    /// failures (0 is success and never reaches an error value).
    pub fn exit_code(&self) -> u8 {
        match self {
            CopathError::Numeric(_) => 2,
            _ => 1,
        }
    }

    /// Convenience constructor for [`CopathError::Io`].
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CopathError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
