use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionBackend, CompletionRequest, LlmError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000`; `/v1/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Client for a completion-style endpoint (`POST /v1/completions`).
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl HttpBackend {
    /// Builds a client, reading the API key from `LLM_API_KEY` if set.
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/v1/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "n": request.n,
            "max_tokens": request.max_tokens,
            "stop": request.stop,
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        request.validate()?;
        let mut builder = self.client.post(self.endpoint()).json(&self.body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::Schema(e.to_string()))?;
        if parsed.choices.len() != request.n as usize {
            return Err(LlmError::Schema(format!(
                "expected {} choices, got {}",
                request.n,
                parsed.choices.len()
            )));
        }
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}
