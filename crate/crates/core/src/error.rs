use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} = {value} is outside [0, 1]")]
    Range { what: &'static str, value: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("tape corruption: {0}")]
    TapeCorrupt(String),

    #[error("training diverged in {phase} at step {step}: loss = {loss}")]
    Diverged {
        phase: &'static str,
        step: usize,
        loss: f64,
    },

    #[error("parameter stores are incompatible: {0}")]
    IncompatibleStores(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Image(#[from] ImageError),

    #[error("config line {line}: {msg}")]
    ParseConfig { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

/// Failures while decoding a checkpoint file. Each variant maps to its own
/// exit code in the command-line front end.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"CLL1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (this build reads {supported})")]
    Version { found: u16, supported: u16 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("parameter {name}: stored dims {stored:?} do not match expected {expected:?}")]
    DimMismatch {
        name: String,
        stored: [u32; 4],
        expected: [u32; 4],
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("malformed image: {0}")]
    Malformed(String),
}
