use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, LlmError};
use crate::error::ParseError;

/// How a rule selects prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Prefix(String),
    Contains(String),
    /// A regular expression searched anywhere in the prompt.
    Pattern(String),
}

/// A scripted response rule. Responses are handed out in order and cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub responses: Vec<String>,
    #[serde(default)]
    pub one_shot: bool,
}

impl ScriptRule {
    pub fn prefix(prefix: impl Into<String>, responses: &[&str]) -> Self {
        Self::new(Matcher::Prefix(prefix.into()), responses)
    }

    pub fn contains(needle: impl Into<String>, responses: &[&str]) -> Self {
        Self::new(Matcher::Contains(needle.into()), responses)
    }

    pub fn pattern(pattern: impl Into<String>, responses: &[&str]) -> Self {
        Self::new(Matcher::Pattern(pattern.into()), responses)
    }

    fn new(matcher: Matcher, responses: &[&str]) -> Self {
        Self {
            matcher,
            responses: responses.iter().map(|s| s.to_string()).collect(),
            one_shot: false,
        }
    }

    pub fn once(mut self) -> Self {
        self.one_shot = true;
        self
    }
}

enum CompiledMatcher {
    Prefix(String),
    Contains(String),
    Pattern(Regex),
}

impl CompiledMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            CompiledMatcher::Prefix(p) => prompt.starts_with(p.as_str()),
            CompiledMatcher::Contains(c) => prompt.contains(c.as_str()),
            CompiledMatcher::Pattern(re) => re.is_match(prompt),
        }
    }
}

#[derive(Default, Clone)]
struct RuleState {
    hits: usize,
    spent: bool,
}

/// Deterministic rule-driven backend for offline runs and tests.
///
/// Rules are tried in order; the first live rule that matches serves one
/// sample. Each of the `n` samples in a request is a separate hit. Counters
/// are guarded by one lock per request, so concurrent callers observe a
/// consistent cycle order.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    compiled: Vec<CompiledMatcher>,
    state: Mutex<Vec<RuleState>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ParseError> {
        let compiled = rules
            .iter()
            .enumerate()
            .map(|(i, rule)| {
                if rule.responses.is_empty() {
                    return Err(ParseError::Schema {
                        path: format!("$[{i}].responses"),
                        message: "a rule needs at least one response".into(),
                    });
                }
                Ok(match &rule.matcher {
                    Matcher::Prefix(p) => CompiledMatcher::Prefix(p.clone()),
                    Matcher::Contains(c) => CompiledMatcher::Contains(c.clone()),
                    Matcher::Pattern(p) => {
                        CompiledMatcher::Pattern(Regex::new(p).map_err(|e| ParseError::Schema {
                            path: format!("$[{i}].match.pattern"),
                            message: e.to_string(),
                        })?)
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let state = Mutex::new(vec![RuleState::default(); rules.len()]);
        Ok(Self {
            rules,
            compiled,
            state,
        })
    }

    /// Parses a script file: a JSON array of rules.
    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let rules: Vec<ScriptRule> = serde_json::from_str(text).map_err(|e| ParseError::Json {
            path: "$".into(),
            message: e.to_string(),
        })?;
        Self::new(rules)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// A copy with all counters reset, for starting a new episode.
    pub fn fresh(&self) -> Self {
        Self::new(self.rules.clone()).expect("rules already validated")
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        request.validate()?;
        let mut state = self.state.lock().expect("script state lock poisoned");
        let mut out = Vec::with_capacity(request.n as usize);
        for _ in 0..request.n {
            let idx = (0..self.rules.len())
                .find(|&i| !state[i].spent && self.compiled[i].matches(&request.prompt))
                .ok_or_else(|| LlmError::FixtureGap {
                    prompt_head: request.prompt.chars().take(80).collect(),
                })?;
            let rule = &self.rules[idx];
            let slot = &mut state[idx];
            out.push(rule.responses[slot.hits % rule.responses.len()].clone());
            slot.hits += 1;
            if rule.one_shot {
                slot.spent = true;
            }
        }
        Ok(out)
    }
}
