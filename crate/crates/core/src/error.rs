use thiserror::Error;

/// Failure to decode a structured document (trees, app and task specs, scripts).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("invalid JSON at {path}: {message}")]
    Json { path: String, message: String },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("structural error at {path}: {message}")]
    Structure { path: String, message: String },
}

/// Completion backend failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response schema violation: {0}")]
    Schema(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// The scripted backend has no rule for a prompt: the fixture is incomplete.
    #[error("no script rule matches prompt starting with {prompt_head:?}")]
    FixtureGap { prompt_head: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    /// Transport errors, rate limiting and server-side statuses are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    pub fn is_fixture_gap(&self) -> bool {
        match self {
            LlmError::FixtureGap { .. } => true,
            LlmError::Exhausted { last, .. } => last.is_fixture_gap(),
            _ => false,
        }
    }
}

/// Simulator configuration and runtime failures.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("episode already terminated")]
    Terminated,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Scoring and statistics failures.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("trace does not match task: {0}")]
    Mismatch(String),
    #[error("incomplete trace: {0}")]
    Incomplete(String),
}
