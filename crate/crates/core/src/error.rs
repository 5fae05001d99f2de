use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by environment handling, kernel evolution and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A lattice site needed by the computation lies outside the environment window.
    #[error("window error: site range [{need_lo}, {need_hi}] not covered by environment window [{have_lo}, {have_hi}]")]
    Window {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },

    #[error("{path}:{line}: {field}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("no admissible samples: {0}")]
    EmptySample(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
