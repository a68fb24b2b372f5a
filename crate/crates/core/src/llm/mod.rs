//! Completion backends: a uniform request/response interface with an HTTP
//! client, a deterministic scripted backend, retries, and call recording.

mod http;
mod retry;
mod scripted;
mod session;

use serde::{Deserialize, Serialize};

pub use crate::error::LlmError;
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use retry::{FakeClock, RetryPolicy, RetryingBackend, Sleeper, ThreadSleeper};
pub use scripted::{Matcher, ScriptRule, ScriptedBackend};
pub use session::{CallPurpose, CallRecord, LlmSession};

pub const DEFAULT_MAX_TOKENS: u32 = 512;

/// A completion request. Temperature 0 means greedy decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub n: u32,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl CompletionRequest {
    /// Single greedy completion with default limits.
    pub fn greedy(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            n: 1,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: Vec::new(),
        }
    }

    pub fn sampled(prompt: impl Into<String>, n: u32, temperature: f64) -> Self {
        Self {
            n,
            temperature,
            ..Self::greedy(prompt)
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.n == 0 {
            return Err(LlmError::InvalidRequest("n must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be at least 1".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!(
                "invalid temperature {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Anything that turns a prompt into `n` completion texts.
pub trait CompletionBackend: Send + Sync {
    /// Returns exactly `request.n` texts.
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        (**self).complete(request)
    }
}
