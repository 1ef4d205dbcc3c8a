use std::fmt;

use onconet::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Io { .. } => EXIT_IO,
                Error::Dimension { .. }
                | Error::Validation(_)
                | Error::Parse { .. }
                | Error::Cycle(_)
                | Error::Lookup(_) => EXIT_USAGE,
                Error::Divergence(_)
                | Error::UndefinedMetric(_)
                | Error::UndefinedCorrelation(_)
                | Error::DegenerateData(_)
                | Error::Search(_)
                | Error::Generation(_) => EXIT_COMPUTE,
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}
