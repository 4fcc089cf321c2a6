//! Command implementations behind the `rr-replay` binary.
//!
//! Exit codes are part of the interface: 0 success, 1 verification failure,
//! 2 usage or config error, 3 I/O error.

pub mod bench;
pub mod config;
pub mod output;
pub mod simulate;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<rr_replay::ReplayError> for CliError {
    fn from(e: rr_replay::ReplayError) -> Self {
        CliError::Usage(e.to_string())
    }
}
