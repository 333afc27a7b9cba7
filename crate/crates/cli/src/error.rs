use std::path::PathBuf;

use thiserror::Error;

/// Exit status for a bad configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for simulation or I/O failures.
pub const EXIT_RUNTIME: i32 = 3;
/// Exit status when a replay does not reproduce its manifest.
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] qpv_core::Error),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("replay differs from manifest: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            _ => EXIT_RUNTIME,
        }
    }
}
