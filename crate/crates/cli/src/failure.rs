use std::fmt;
use std::process::ExitCode;

use chaoscorr_core::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_COMPARISON: u8 = 4;
pub const EXIT_DARK_INPUT: u8 = 5;

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    Comparison(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Core(Error::DarkInput) => EXIT_DARK_INPUT,
            Failure::Core(Error::File { .. } | Error::Io(_) | Error::Format { .. }) => EXIT_IO,
            Failure::Core(_) | Failure::Usage(_) => EXIT_CONFIG,
            Failure::Comparison(_) => EXIT_COMPARISON,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(Error::DarkInput) => {
                write!(
                    f,
                    "{}; check the split ratios and the intensity file",
                    Error::DarkInput
                )
            }
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Comparison(msg) => write!(f, "comparison failed: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
