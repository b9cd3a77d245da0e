use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LeadError> = std::result::Result<T, E>;

/// Broad failure categories. The CLI maps each one to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Shape,
    Data,
    Format,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Shape => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Format => 5,
            ErrorCategory::Numeric => 6,
            ErrorCategory::Io => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Shape => "shape",
            ErrorCategory::Data => "data",
            ErrorCategory::Format => "format",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum LeadError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: expected {expected} payload bytes, found {found}")]
    Length { expected: u64, found: u64 },
    #[error("unsupported version {found} (supported: {supported})")]
    Version { found: u16, supported: u16 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<LeadError>,
    },
}

impl LeadError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            LeadError::Config(_) => ErrorCategory::Config,
            LeadError::Shape(_) | LeadError::DimensionMismatch(_) => ErrorCategory::Shape,
            LeadError::Data(_) => ErrorCategory::Data,
            LeadError::Format(_) | LeadError::Length { .. } | LeadError::Version { .. } => {
                ErrorCategory::Format
            }
            LeadError::Numeric(_) => ErrorCategory::Numeric,
            LeadError::Io { .. } => ErrorCategory::Io,
            LeadError::InFile { source, .. } => source.category(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LeadError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the file a stage error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        LeadError::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> LeadError {
    LeadError::Config(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> LeadError {
    LeadError::Data(msg.into())
}
