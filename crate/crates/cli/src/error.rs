use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] edlab_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const TOLERANCE_FAIL: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const RUNTIME_ERROR: u8 = 3;
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// Core errors raised while validating a config are configuration errors.
    pub fn from_core_config(e: edlab_core::Error) -> Self {
        match e {
            edlab_core::Error::Config(msg) => HarnessError::Config(msg),
            other => HarnessError::Config(other.to_string()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Core(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => exit::CONFIG_ERROR,
            _ => exit::RUNTIME_ERROR,
        }
    }
}
