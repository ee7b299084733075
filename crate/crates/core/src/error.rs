use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("edge {edge} references unknown node {node}")]
    DanglingEdge { edge: u64, node: u64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fuel-economy bin {0} is not calibrated")]
    Uncalibrated(u8),

    #[error("calibration of bin {bin} failed: {reason}")]
    Calibration { bin: u8, reason: String },

    #[error("missing artifact {path} (run the `{stage}` stage first)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Process exit status for this error: 1 for configuration problems,
    /// 2 for bad or missing data, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Malformed { .. }
            | Error::DanglingEdge { .. }
            | Error::InvalidNetwork(_)
            | Error::InvalidInput(_)
            | Error::Uncalibrated(_)
            | Error::Calibration { .. }
            | Error::MissingArtifact { .. } => 2,
            Error::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
