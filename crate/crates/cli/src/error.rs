use std::fmt;

use sparse_mix::MixError;

/// Error carrying the process exit code: 1 for numerical failures, 2 for bad
/// usage or input.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MixError> for CliError {
    fn from(e: MixError) -> Self {
        match e {
            MixError::EmptyCluster { .. } | MixError::NumericalFailure(_) => CliError::internal(e.to_string()),
            MixError::InvalidArgument(_) | MixError::Format { .. } | MixError::Unsupported(_) => {
                CliError::usage(e.to_string())
            }
        }
    }
}

pub fn write_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::internal(format!("cannot write {}: {e}", path.display()))
}
