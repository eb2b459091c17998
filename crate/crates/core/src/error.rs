use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LanError> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// The variants line up with the CLI exit codes: configuration problems
/// exit with 2, I/O and file-format problems with 3, numeric divergence with 4.
#[derive(Debug, Error)]
pub enum LanError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric domain error in {context}: non-finite value")]
    NumericDomain { context: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error in {path}: {detail} (offset {offset})")]
    Format {
        path: String,
        offset: u64,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: u64, detail: String },
}

impl LanError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        LanError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LanError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, offset: u64, detail: impl Into<String>) -> Self {
        LanError::Format {
            path: path.into(),
            offset,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LanError::Config(_) | LanError::Contract(_) | LanError::Shape { .. } => 2,
            LanError::Io { .. } | LanError::Format { .. } => 3,
            LanError::NumericDomain { .. } | LanError::Divergence { .. } => 4,
        }
    }
}
