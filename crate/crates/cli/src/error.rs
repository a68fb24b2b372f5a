use std::fmt;

/// Failures mapped to process exit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Config(String),
    Backend(String),
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
            CliError::Divergence(m) => write!(f, "replay diverged: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
