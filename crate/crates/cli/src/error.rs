use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid kernel: {0}")]
    Kernel(qclt_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] qclt_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Kernel(_) => exit::INVALID_KERNEL,
            CliError::Io { .. } => exit::IO,
            CliError::Config(_) | CliError::Core(_) => exit::CONFIG,
        }
    }
}

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VIOLATED: i32 = 1;
    pub const INVALID_KERNEL: i32 = 2;
    pub const IO: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const INCONCLUSIVE: i32 = 5;
}
