use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid caller-supplied argument (ranges, lengths, ordering).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Inconsistent configuration (unknown stream names, bad network, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A file-level format problem that prevents parsing altogether.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// A format or I/O problem attributed to a named input file.
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Self::File { .. } => self,
            other => Self::File {
                path: path.to_path_buf(),
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Self::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Self::Format {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
