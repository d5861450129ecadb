use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] rcgff::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl LabError {
    /// 0 success, 1 I/O, 2 parameter, 3 numerical or solver, 4 degenerate.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(e) => e.exit_code(),
            LabError::Config(_) => 2,
            LabError::Io { .. } => 1,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Config(msg.into()))
}
