use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("load error: {0}")]
    Load(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error category, used for process exit codes and C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps the error with a short description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) => ErrorKind::Usage,
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    /// Short stable tag for machine-parsable error lines.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Load(_) => "load",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Alignment(_) => "alignment",
            Error::Unsupported(_) => "unsupported",
            Error::Numerical(_) => "numerical",
            Error::Usage(_) => "usage",
            Error::Context { source, .. } => source.tag(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
