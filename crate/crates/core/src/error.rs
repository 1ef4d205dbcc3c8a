use std::path::PathBuf;

/// Errors produced anywhere in the modelling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cycle in pathway relations: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("training diverged at {0}")]
    Divergence(String),

    #[error("metric {0} is undefined for single-class labels")]
    UndefinedMetric(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
