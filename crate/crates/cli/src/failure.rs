//! Exit codes and the one-line error format.

use std::path::Path;
use std::process::ExitCode;

use cll_core::{CheckpointError, Error};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core { error: Error, path: Option<String> },
    Gradcheck(String),
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure::Core { error, path: None }
    }
}

impl Failure {
    /// `error` while handling the file at `path`.
    pub fn at(error: Error, path: &Path) -> Self {
        Failure::Core {
            error,
            path: Some(path.display().to_string()),
        }
    }

    pub fn code_and_kind(&self) -> (u8, &'static str) {
        match self {
            Failure::Usage(_) => (2, "usage"),
            Failure::Gradcheck(_) => (6, "gradcheck"),
            Failure::Core { error, .. } => match error {
                Error::Config(_) | Error::ParseConfig { .. } | Error::Range { .. } => (3, "config"),
                Error::Io(_) => (4, "io"),
                Error::Diverged { .. } | Error::NonFinite(_) => (5, "diverged"),
                Error::Image(_) => (7, "image"),
                Error::Checkpoint(c) => checkpoint_kind(c),
                Error::Dimension { .. } | Error::TapeCorrupt(_) | Error::IncompatibleStores(_) => (1, "internal"),
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Gradcheck(m) => m.clone(),
            Failure::Core { error, path: None } => error.to_string(),
            Failure::Core { error, path: Some(p) } => format!("{p}: {error}"),
        }
    }

    /// Print the error line to stderr and return the exit code.
    pub fn report(&self) -> ExitCode {
        let (code, kind) = self.code_and_kind();
        eprintln!("error code={code} kind={kind} message={:?}", self.message());
        ExitCode::from(code)
    }
}

pub fn checkpoint_kind(e: &CheckpointError) -> (u8, &'static str) {
    match e {
        CheckpointError::BadMagic(_) => (10, "checkpoint-magic"),
        CheckpointError::Version { .. } => (11, "checkpoint-version"),
        CheckpointError::Truncated(_) => (12, "checkpoint-truncated"),
        CheckpointError::DimMismatch { .. } => (13, "checkpoint-dims"),
        CheckpointError::Malformed(_) => (14, "checkpoint-malformed"),
    }
}
