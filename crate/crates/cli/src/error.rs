use std::io;
use std::path::Path;

use attn_accel_core::config::{ConfigError, ProtocolError};
use attn_accel_core::engine::EngineError;
use attn_accel_core::perf::{CalibrationError, PerfError};
use attn_accel_core::tensor_file::TensorFileError;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_THRESHOLD: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// A measured quantity crossed its acceptance bound.
    #[error("{0}")]
    Threshold(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    /// Unreadable, unwritable, or malformed input.
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Threshold(_) => EXIT_THRESHOLD,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Format(_) => EXIT_FORMAT,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Format(format!("{}: {e}", path.display()))
    }

    pub fn tensor(path: &Path, e: TensorFileError) -> Self {
        CliError::Format(format!("{}: {e}", path.display()))
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::InvalidConfiguration(_) => CliError::Invalid(e.to_string()),
            ProtocolError::MalformedCommand(_) | ProtocolError::NoStart => CliError::Format(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::InvalidDesign(_) => CliError::Invalid(e.to_string()),
            ConfigError::Parse(_) => CliError::Format(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidRun(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<PerfError> for CliError {
    fn from(e: PerfError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Parse(_) => CliError::Format(e.to_string()),
            CalibrationError::NoSolution => CliError::Invalid(e.to_string()),
        }
    }
}
