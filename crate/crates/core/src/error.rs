use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented invariant or precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The intensity driving a detector is identically zero, so no rate ceiling exists.
    #[error("dark input: intensity trace is zero everywhere")]
    DarkInput,

    #[error("acquisition mismatch: {0}")]
    AcquisitionMismatch(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    /// Normalization needs non-empty singles and a positive duration.
    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("insufficient background region: {found} bins (need at least {required})")]
    InsufficientBackground { found: usize, required: usize },

    #[error("permanent order {0} exceeds the supported maximum of {max}", max = crate::analytic::MAX_PERMANENT_ORDER)]
    OrderTooLarge(usize),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            what,
            detail: detail.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::format("csv", format!("{other:?}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            Error::Io(err.into())
        } else {
            Error::format("json", err)
        }
    }
}
