use std::path::PathBuf;

use crate::config::Diagnostic;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(#[from] Diagnostic),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Summary { path: PathBuf, message: String },
    #[error("scenario mismatch: {first} has {first_hash}, {other} has {other_hash}")]
    ScenarioMismatch {
        first: PathBuf,
        first_hash: String,
        other: PathBuf,
        other_hash: String,
    },
    #[error("no vehicle with id {0}")]
    UnknownVehicle(u32),
    #[error("compare needs at least two summaries")]
    TooFewSummaries,
    #[error("simulation failed for {protocol} seed {seed}: {source}")]
    Run {
        protocol: String,
        seed: u64,
        #[source]
        source: pcbb_core::Error,
    },
    #[error(transparent)]
    Core(#[from] pcbb_core::Error),
}

impl Error {
    /// Tags an I/O error with the path involved.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 2 for configuration and scenario mismatches, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ScenarioMismatch { .. } | Error::TooFewSummaries => 2,
            _ => 1,
        }
    }
}
