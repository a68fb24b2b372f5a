//! Action selection: goal normalization and the six planner strategies.

mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{
    detect_done_minus, last_sentence, majority_vote, normalize_vote, parse_cot_answer, parse_react,
    ThoughtAction, VoteOutcome, UNKNOWN_ACTION,
};

use crate::llm::{CallPurpose, CompletionRequest, LlmError, LlmSession};
use crate::prompts::{numbered_list, TemplateId};
use crate::screen::ScreenDescription;

/// Commanded-history rendering when no action has been taken.
pub const EMPTY_COMMAND_HISTORY: &str = "1) None.";
/// ReAct history rendering before the first step.
pub const EMPTY_REACT_HISTORY: &str = "None.";
pub const COT_SC_SAMPLES: u32 = 8;
pub const COT_SC_TEMPERATURE: f64 = 0.5;
/// Observations kept in the rendered ReAct history.
pub const REACT_OBSERVATION_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningMethod {
    ZeroShotMinus,
    ZeroShotPlus,
    CotScMinus,
    CotScPlus,
    ReactMinus,
    ReactPlus,
}

impl ReasoningMethod {
    pub const ALL: [ReasoningMethod; 6] = [
        ReasoningMethod::ZeroShotMinus,
        ReasoningMethod::ZeroShotPlus,
        ReasoningMethod::CotScMinus,
        ReasoningMethod::CotScPlus,
        ReasoningMethod::ReactMinus,
        ReasoningMethod::ReactPlus,
    ];

    /// Plus variants consume latent estimates and stop via completion inference.
    pub fn uses_latent_state(self) -> bool {
        matches!(
            self,
            ReasoningMethod::ZeroShotPlus | ReasoningMethod::CotScPlus | ReasoningMethod::ReactPlus
        )
    }

    pub fn template(self) -> TemplateId {
        match self {
            ReasoningMethod::ZeroShotMinus => TemplateId::ZeroShotMinus,
            ReasoningMethod::ZeroShotPlus => TemplateId::ZeroShotPlus,
            ReasoningMethod::CotScMinus => TemplateId::CotScMinus,
            ReasoningMethod::CotScPlus => TemplateId::CotScPlus,
            ReasoningMethod::ReactMinus => TemplateId::ReactMinus,
            ReasoningMethod::ReactPlus => TemplateId::ReactPlus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningMethod::ZeroShotMinus => "zero_shot_minus",
            ReasoningMethod::ZeroShotPlus => "zero_shot_plus",
            ReasoningMethod::CotScMinus => "cot_sc_minus",
            ReasoningMethod::CotScPlus => "cot_sc_plus",
            ReasoningMethod::ReactMinus => "react_minus",
            ReasoningMethod::ReactPlus => "react_plus",
        }
    }
}

impl fmt::Display for ReasoningMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasoningMethod {
    type Err = String;

    /// Accepts `zero_shot_plus`, `zero-shot+`, `ZeroShotPlus`, `cot-sc-`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("unknown method {s:?}");
        let lower = s.trim().to_ascii_lowercase();
        let (body, plus) = if let Some(b) = lower.strip_suffix('+') {
            (b.to_string(), true)
        } else if let Some(b) = lower.strip_suffix('-') {
            (b.to_string(), false)
        } else {
            let alnum: String = lower
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect();
            if let Some(b) = alnum.strip_suffix("plus") {
                (b.to_string(), true)
            } else if let Some(b) = alnum.strip_suffix("minus") {
                (b.to_string(), false)
            } else {
                return Err(err());
            }
        };
        let base: String = body.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match (base.as_str(), plus) {
            ("zeroshot", false) => Ok(ReasoningMethod::ZeroShotMinus),
            ("zeroshot", true) => Ok(ReasoningMethod::ZeroShotPlus),
            ("cotsc", false) => Ok(ReasoningMethod::CotScMinus),
            ("cotsc", true) => Ok(ReasoningMethod::CotScPlus),
            ("react", false) => Ok(ReasoningMethod::ReactMinus),
            ("react", true) => Ok(ReasoningMethod::ReactPlus),
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("planner backend call failed: {0}")]
    Backend(#[from] LlmError),
    #[error("all {0} sampled answers were empty")]
    NoAnswer(usize),
    #[error("{0} needs progression and mistake estimates")]
    MissingLatent(ReasoningMethod),
}

pub fn normalize_goal_prompt(raw_goal: &str) -> String {
    TemplateId::NormalizeGoal
        .template()
        .render(&[("original_request", raw_goal)])
        .expect("normalization template binds one slot")
}

/// Rephrases the raw goal once per episode. An empty answer keeps the raw goal.
pub fn normalize_goal(session: &mut LlmSession, raw_goal: &str) -> Result<String, LlmError> {
    let out = session.greedy(CallPurpose::NormalizeGoal, normalize_goal_prompt(raw_goal))?;
    let out = out.trim();
    Ok(if out.is_empty() {
        raw_goal.trim().to_string()
    } else {
        out.to_string()
    })
}

/// Everything a planner may read at one step.
#[derive(Debug, Clone, Copy)]
pub struct PlannerInput<'a> {
    pub cleaned_goal: &'a str,
    pub screen: &'a ScreenDescription,
    /// Commands issued at earlier steps, oldest first.
    pub commanded_history: &'a [String],
    pub progression: Option<&'a str>,
    pub mistakes: Option<&'a str>,
}

/// A ReAct turn kept for later prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactTurn {
    pub observation: String,
    pub thought: String,
    pub action: String,
}

/// What the planner chose at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerDecision {
    pub commanded: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    /// Parsed answer of every sample (CoT-SC only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parsed_samples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote: Option<VoteOutcome>,
    /// Minus variants: the action declares the task done.
    pub declares_done: bool,
}

/// Renders the observation/thought/action history, keeping only the most
/// recent `REACT_OBSERVATION_WINDOW` observations.
pub fn render_react_history(turns: &[ReactTurn]) -> String {
    if turns.is_empty() {
        return EMPTY_REACT_HISTORY.to_string();
    }
    let keep_from = turns.len().saturating_sub(REACT_OBSERVATION_WINDOW);
    let mut lines = Vec::new();
    for (i, turn) in turns.iter().enumerate() {
        let n = i + 1;
        if i >= keep_from {
            lines.push(format!("Observation {n}:"));
            if !turn.observation.is_empty() {
                lines.push(turn.observation.clone());
            }
        }
        lines.push(format!("Thought {n}: {}", turn.thought));
        lines.push(format!("Action {n}: {}", turn.action));
    }
    lines.join("\n")
}

/// Per-episode planner. Holds the ReAct history; other strategies are stateless.
#[derive(Debug, Clone)]
pub struct Planner {
    method: ReasoningMethod,
    react_turns: Vec<ReactTurn>,
}

impl Planner {
    pub fn new(method: ReasoningMethod) -> Self {
        Self {
            method,
            react_turns: Vec::new(),
        }
    }

    pub fn method(&self) -> ReasoningMethod {
        self.method
    }

    pub fn react_turns(&self) -> &[ReactTurn] {
        &self.react_turns
    }

    /// Renders this method's prompt for the given step.
    pub fn prompt(&self, input: &PlannerInput<'_>) -> Result<String, PlannerError> {
        let screen = input.screen.render();
        let commanded = numbered_list(input.commanded_history, EMPTY_COMMAND_HISTORY);
        let latent = || -> Result<(String, &str), PlannerError> {
            match (input.progression, input.mistakes) {
                (Some(p), Some(m)) => Ok((p.to_string(), m)),
                _ => Err(PlannerError::MissingLatent(self.method)),
            }
        };
        let tpl = self.method.template().template();
        let rendered = match self.method {
            ReasoningMethod::ZeroShotMinus => tpl.render(&[
                ("goal_clean", input.cleaned_goal),
                ("formatted_history_of_commanded_actions", &commanded),
                ("screen_description", &screen),
            ]),
            ReasoningMethod::CotScMinus => tpl.render(&[
                ("cleaned_goal", input.cleaned_goal),
                ("formatted_commanded_action_history", &commanded),
                ("screen_description", &screen),
            ]),
            ReasoningMethod::ZeroShotPlus => {
                let (progression, mistakes) = latent()?;
                tpl.render(&[
                    ("cleaned_goal", input.cleaned_goal),
                    ("progression", &progression),
                    ("mistake_assessment", mistakes),
                    ("screen_description", &screen),
                ])
            }
            ReasoningMethod::CotScPlus => {
                let (progression, mistakes) = latent()?;
                tpl.render(&[
                    ("cleaned_goal", input.cleaned_goal),
                    ("progress_summary", &progression),
                    ("mistake_assessment", mistakes),
                    ("screen_description", &screen),
                ])
            }
            ReasoningMethod::ReactMinus => tpl.render(&[
                ("cleaned_goal", input.cleaned_goal),
                (
                    "observation_thought_action_history",
                    &render_react_history(&self.react_turns),
                ),
                ("screen_description", &screen),
            ]),
            ReasoningMethod::ReactPlus => {
                let (progression, mistakes) = latent()?;
                tpl.render(&[
                    ("cleaned_goal", input.cleaned_goal),
                    ("progress_summary", &progression),
                    ("mistake_assessment", mistakes),
                    (
                        "observation_thought_action_history",
                        &render_react_history(&self.react_turns),
                    ),
                    ("screen_description", &screen),
                ])
            }
        };
        Ok(rendered.expect("planner templates are bound completely"))
    }

    /// Chooses the next command. Minus variants may declare the task done;
    /// plus variants never do (completion inference decides for them).
    pub fn select(
        &mut self,
        session: &mut LlmSession,
        input: &PlannerInput<'_>,
    ) -> Result<PlannerDecision, PlannerError> {
        let prompt = self.prompt(input)?;
        let minus = !self.method.uses_latent_state();
        let decision = match self.method {
            ReasoningMethod::ZeroShotMinus | ReasoningMethod::ZeroShotPlus => {
                let raw = session.greedy(CallPurpose::Planner, prompt)?;
                let commanded = raw.trim().to_string();
                PlannerDecision {
                    declares_done: minus && detect_done_minus(&commanded),
                    commanded,
                    thought: None,
                    parsed_samples: Vec::new(),
                    vote: None,
                }
            }
            ReasoningMethod::CotScMinus | ReasoningMethod::CotScPlus => {
                let samples = session.call(
                    CallPurpose::Planner,
                    CompletionRequest::sampled(prompt, COT_SC_SAMPLES, COT_SC_TEMPERATURE),
                )?;
                let parsed: Vec<String> = samples.iter().map(|s| parse_cot_answer(s)).collect();
                let vote = majority_vote(&parsed).ok_or(PlannerError::NoAnswer(parsed.len()))?;
                PlannerDecision {
                    declares_done: minus && detect_done_minus(&vote.winner),
                    commanded: vote.winner.clone(),
                    thought: None,
                    parsed_samples: parsed,
                    vote: Some(vote),
                }
            }
            ReasoningMethod::ReactMinus | ReasoningMethod::ReactPlus => {
                let raw = session.greedy(CallPurpose::Planner, prompt)?;
                let ta = parse_react(&raw);
                self.react_turns.push(ReactTurn {
                    observation: input.screen.render(),
                    thought: ta.thought.clone(),
                    action: ta.action.clone(),
                });
                PlannerDecision {
                    declares_done: minus && detect_done_minus(&ta.action),
                    commanded: ta.action,
                    thought: Some(ta.thought),
                    parsed_samples: Vec::new(),
                    vote: None,
                }
            }
        };
        Ok(decision)
    }
}
