//! Command-line front end for the synchronization experiments.

pub mod args;
pub mod commands;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use args::{parse, CliInvocation, Command, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sync(#[from] ofdm_sync::SyncError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Clap(e) => e.exit_code(),
            CliError::Io { .. } | CliError::Sync(_) => 1,
        }
    }
}
