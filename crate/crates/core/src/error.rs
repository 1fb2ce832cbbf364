use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in an input a parse error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(usize),
    Line(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(offset) => write!(f, "byte offset {offset}"),
            Location::Line(line) => write!(f, "line {line}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("degenerate input{}: {reason}", frame.map(|i| format!(" at frame {i}")).unwrap_or_default())]
    Degenerate { frame: Option<usize>, reason: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("unsupported format at {location}: {message}")]
    UnsupportedFormat { location: Location, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(location: Location, message: impl Into<String>) -> Self {
        Error::Parse {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn unsupported(location: Location, message: impl Into<String>) -> Self {
        Error::UnsupportedFormat {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The location carried by a parse or format error, if any.
    pub fn location(&self) -> Option<Location> {
        match self {
            Error::Parse { location, .. } | Error::UnsupportedFormat { location, .. } => Some(*location),
            _ => None,
        }
    }
}
