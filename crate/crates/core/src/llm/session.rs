use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, LlmError};

/// Which agent component issued a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    NormalizeGoal,
    PreviousAction,
    ScreenSummary,
    Progression,
    Mistakes,
    Planner,
    Completion,
    Grounder,
}

/// One backend call as it appears in a trace: the verbatim prompt, the
/// decoding parameters and every returned text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub purpose: CallPurpose,
    pub prompt: String,
    pub temperature: f64,
    pub n: u32,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    pub completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Backend handle that logs every call for one episode.
pub struct LlmSession {
    backend: Arc<dyn CompletionBackend>,
    calls: Vec<CallRecord>,
}

impl LlmSession {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            calls: Vec::new(),
        }
    }

    pub fn call(
        &mut self,
        purpose: CallPurpose,
        request: CompletionRequest,
    ) -> Result<Vec<String>, LlmError> {
        let result = self.backend.complete(&request).and_then(|texts| {
            if texts.len() == request.n as usize {
                Ok(texts)
            } else {
                Err(LlmError::Schema(format!(
                    "expected {} completions, got {}",
                    request.n,
                    texts.len()
                )))
            }
        });
        let (completions, error) = match &result {
            Ok(texts) => (texts.clone(), None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        self.calls.push(CallRecord {
            purpose,
            prompt: request.prompt,
            temperature: request.temperature,
            n: request.n,
            max_tokens: request.max_tokens,
            stop: request.stop,
            completions,
            error,
        });
        result
    }

    /// Greedy single completion.
    pub fn greedy(&mut self, purpose: CallPurpose, prompt: String) -> Result<String, LlmError> {
        let mut texts = self.call(purpose, CompletionRequest::greedy(prompt))?;
        Ok(texts.remove(0))
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    /// Removes and returns the calls logged so far.
    pub fn drain(&mut self) -> Vec<CallRecord> {
        std::mem::take(&mut self.calls)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptRule, ScriptedBackend};

    #[test]
    fn records_prompts_verbatim_including_failures() {
        let backend = ScriptedBackend::new(vec![ScriptRule::prefix("known", &["yes"])]).unwrap();
        let mut session = LlmSession::new(Arc::new(backend));
        assert_eq!(
            session
                .greedy(CallPurpose::Planner, "known prompt".into())
                .unwrap(),
            "yes"
        );
        assert!(session
            .greedy(CallPurpose::Grounder, "other".into())
            .is_err());
        let calls = session.drain();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[0].prompt, "known prompt");
        assert_eq!(calls[0].completions, vec!["yes"]);
        assert!(calls[1]
            .error
            .as_deref()
            .unwrap()
            .contains("no script rule"));
        assert!(session.calls().is_empty());
    }

    struct Short;
    impl CompletionBackend for Short {
        fn complete(&self, _: &CompletionRequest) -> Result<Vec<String>, LlmError> {
            Ok(vec!["only one".into()])
        }
    }

    #[test]
    fn wrong_sample_count_is_a_schema_error() {
        let mut session = LlmSession::new(Arc::new(Short));
        let err = session
            .call(
                CallPurpose::Planner,
                CompletionRequest::sampled("p", 8, 0.5),
            )
            .unwrap_err();
        assert!(matches!(err, LlmError::Schema(_)));
    }
}
