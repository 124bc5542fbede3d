use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Format(String),
    #[error("unknown symbol `{0}` (closed alphabet)")]
    UnknownSymbol(String),
    #[error("degenerate labels: data contains a single class")]
    DegenerateLabels,
    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for usage/parse problems, 2 for
    /// data-level problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Format(_) | Error::UnknownSymbol(_) => 1,
            Error::DegenerateLabels | Error::InvalidInput(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
