use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI invocation, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unreadable dataset: {0}")]
    Dataset(gln::Error),

    #[error("missing run artifact {}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run failed: {0}")]
    Run(gln::Error),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CHECKS_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const DATASET: u8 = 4;
    pub const ARTIFACT: u8 = 5;
    pub const OUTPUT: u8 = 6;
    pub const RUN: u8 = 7;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Dataset(_) => exit::DATASET,
            CliError::Artifact { .. } => exit::ARTIFACT,
            CliError::Output { .. } => exit::OUTPUT,
            CliError::Run(_) => exit::RUN,
            CliError::ChecksFailed { .. } => exit::CHECKS_FAILED,
        }
    }

    /// Classifies a library error raised while running a task.
    pub fn from_run(e: gln::Error) -> Self {
        match e {
            gln::Error::Config(msg) => CliError::Config(msg),
            gln::Error::Io { path, source } => CliError::Output { path, source },
            other => CliError::Run(other),
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }
}
