use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code. Argument errors exit with 2 from clap itself.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 3,
            CliError::MissingFile(_) => 4,
        }
    }
}

impl From<tailrisk_core::Error> for CliError {
    fn from(e: tailrisk_core::Error) -> Self {
        use tailrisk_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => CliError::MissingFile(path),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
