//! Five-aspect latent state estimation, chained one prompt per aspect.
//!
//! Per step the order is previous action (skipped at the first step),
//! screen summary, progression and mistakes. Completion is asked only after
//! the planner has proposed a candidate action.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CallPurpose, LlmError, LlmSession};
use crate::prompts::{numbered_list, TemplateId};
use crate::screen::ScreenDescription;

/// Slot value for the last inferred action at the first step.
pub const NO_PREVIOUS_ACTION: &str = "None.";
/// Inferred-action history rendering when nothing has happened yet.
pub const EMPTY_INFERRED_HISTORY: &str = "Nothing. You are just starting.";
/// Prefix the progression prompt ends with; stored estimates exclude it.
pub const PROGRESSION_PREFIX: &str = "You have";
/// The sentence the mistakes prompt asks for when nothing is wrong.
pub const NO_MISTAKES: &str = "No mistakes have been made.";
/// Canonical previous-action answer when the screen did not change.
pub const NO_ACTION_ANSWER: &str = "No action was performed.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentAspect {
    PreviousAction = 1,
    ScreenSummary = 2,
    Progression = 3,
    Mistakes = 4,
    Completion = 5,
}

impl LatentAspect {
    pub const ALL: [LatentAspect; 5] = [
        LatentAspect::PreviousAction,
        LatentAspect::ScreenSummary,
        LatentAspect::Progression,
        LatentAspect::Mistakes,
        LatentAspect::Completion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LatentAspect::PreviousAction => "previous_action",
            LatentAspect::ScreenSummary => "screen_summary",
            LatentAspect::Progression => "progression",
            LatentAspect::Mistakes => "mistakes",
            LatentAspect::Completion => "completion",
        }
    }

    pub fn purpose(self) -> CallPurpose {
        match self {
            LatentAspect::PreviousAction => CallPurpose::PreviousAction,
            LatentAspect::ScreenSummary => CallPurpose::ScreenSummary,
            LatentAspect::Progression => CallPurpose::Progression,
            LatentAspect::Mistakes => CallPurpose::Mistakes,
            LatentAspect::Completion => CallPurpose::Completion,
        }
    }
}

impl fmt::Display for LatentAspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LatentAspect::PreviousAction => "previous action",
            LatentAspect::ScreenSummary => "screen summary",
            LatentAspect::Progression => "progression",
            LatentAspect::Mistakes => "mistakes",
            LatentAspect::Completion => "completion",
        };
        f.write_str(name)
    }
}

/// Text estimates for one step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatentState {
    pub step: usize,
    pub estimates: BTreeMap<LatentAspect, String>,
    /// Parsed completion decision, present once completion was asked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
}

impl LatentState {
    pub fn get(&self, aspect: LatentAspect) -> Option<&str> {
        self.estimates.get(&aspect).map(String::as_str)
    }

    /// Every present aspect has all lower-ordered aspects present too.
    /// Completion may be missing; previous action is absent at step 0.
    pub fn is_chain_complete(&self) -> bool {
        let first = if self.step == 0 {
            LatentAspect::ScreenSummary
        } else {
            LatentAspect::PreviousAction
        };
        let mut missing_seen = false;
        for aspect in LatentAspect::ALL.iter().filter(|a| **a >= first) {
            let present = self.estimates.contains_key(aspect);
            if present && missing_seen {
                return false;
            }
            if !present && *aspect != LatentAspect::Completion {
                missing_seen = true;
            }
        }
        !(self.step == 0 && self.estimates.contains_key(&LatentAspect::PreviousAction))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("estimating {aspect} failed: {source}")]
pub struct LatentError {
    pub aspect: LatentAspect,
    #[source]
    pub source: LlmError,
}

fn render(id: TemplateId, bindings: &[(&str, &str)]) -> String {
    id.template()
        .render(bindings)
        .expect("latent templates are bound completely")
}

pub fn previous_action_prompt(
    last_commanded: &str,
    prev: &ScreenDescription,
    curr: &ScreenDescription,
) -> String {
    render(
        TemplateId::PreviousAction,
        &[
            ("last_action_commanded", last_commanded),
            ("previous_screen_nl_description", &prev.render()),
            ("screen_nl_description", &curr.render()),
        ],
    )
}

pub fn screen_summary_prompt(
    curr: &ScreenDescription,
    last_inferred_action: Option<&str>,
) -> String {
    render(
        TemplateId::ScreenSummary,
        &[
            ("screen_description", &curr.render()),
            (
                "last_inferred_action",
                last_inferred_action.unwrap_or(NO_PREVIOUS_ACTION),
            ),
        ],
    )
}

pub fn progression_prompt(
    inferred_actions: &[String],
    screen_summary: &str,
    curr: &ScreenDescription,
) -> String {
    render(
        TemplateId::Progression,
        &[
            (
                "inferred_action_history_formatted",
                &numbered_list(inferred_actions, EMPTY_INFERRED_HISTORY),
            ),
            ("screen_summary", screen_summary),
            ("screen_description", &curr.render()),
        ],
    )
}

pub fn mistakes_prompt(cleaned_goal: &str, progression: &str, curr: &ScreenDescription) -> String {
    render(
        TemplateId::Mistakes,
        &[
            ("cleaned_goal", cleaned_goal),
            (
                "progress_summary",
                &format!("{PROGRESSION_PREFIX} {progression}"),
            ),
            ("screen_description", &curr.render()),
        ],
    )
}

pub fn completion_prompt(
    cleaned_goal: &str,
    inferred_actions: &[String],
    screen_summary: &str,
    candidate: &str,
) -> String {
    render(
        TemplateId::Completion,
        &[
            ("cleaned_goal", cleaned_goal),
            (
                "inferred_action_history_formatted",
                &numbered_list(inferred_actions, EMPTY_INFERRED_HISTORY),
            ),
            ("screen_summary", screen_summary),
            ("possible_action_command", candidate),
        ],
    )
}

/// Done iff the answer, after leading whitespace, begins with "Yes" (case-sensitive).
pub fn parse_completion(raw: &str) -> bool {
    raw.trim_start().starts_with("Yes")
}

/// Drops leading whitespace and an echoed "You have" from a progression answer.
pub fn strip_progression_prefix(raw: &str) -> String {
    let trimmed = raw.trim_start();
    match trimmed.strip_prefix(PROGRESSION_PREFIX) {
        Some(rest) if rest.is_empty() || rest.starts_with(char::is_whitespace) => {
            rest.trim_start().to_string()
        }
        _ => trimmed.to_string(),
    }
}

pub fn infer_previous_action(
    session: &mut LlmSession,
    last_commanded: &str,
    prev: &ScreenDescription,
    curr: &ScreenDescription,
) -> Result<String, LlmError> {
    session.greedy(
        CallPurpose::PreviousAction,
        previous_action_prompt(last_commanded, prev, curr),
    )
}

pub fn infer_screen_summary(
    session: &mut LlmSession,
    curr: &ScreenDescription,
    last_inferred_action: Option<&str>,
) -> Result<String, LlmError> {
    session.greedy(
        CallPurpose::ScreenSummary,
        screen_summary_prompt(curr, last_inferred_action),
    )
}

pub fn infer_progression(
    session: &mut LlmSession,
    inferred_actions: &[String],
    screen_summary: &str,
    curr: &ScreenDescription,
) -> Result<String, LlmError> {
    let raw = session.greedy(
        CallPurpose::Progression,
        progression_prompt(inferred_actions, screen_summary, curr),
    )?;
    Ok(strip_progression_prefix(&raw))
}

pub fn infer_mistakes(
    session: &mut LlmSession,
    cleaned_goal: &str,
    progression: &str,
    curr: &ScreenDescription,
) -> Result<String, LlmError> {
    session.greedy(
        CallPurpose::Mistakes,
        mistakes_prompt(cleaned_goal, progression, curr),
    )
}

pub fn infer_completion(
    session: &mut LlmSession,
    cleaned_goal: &str,
    inferred_actions: &[String],
    screen_summary: &str,
    candidate: &str,
) -> Result<(bool, String), LlmError> {
    let raw = session.greedy(
        CallPurpose::Completion,
        completion_prompt(cleaned_goal, inferred_actions, screen_summary, candidate),
    )?;
    Ok((parse_completion(&raw), raw))
}

/// Estimator state for one episode: inferred-action history, the previous
/// screen and command, and every step's estimates.
#[derive(Debug, Clone, Default)]
pub struct LatentChain {
    inferred_actions: Vec<String>,
    prev_screen: Option<ScreenDescription>,
    last_commanded: Option<String>,
    history: Vec<LatentState>,
}

impl LatentChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inferred_actions(&self) -> &[String] {
        &self.inferred_actions
    }

    pub fn history(&self) -> &[LatentState] {
        &self.history
    }

    pub fn current(&self) -> Option<&LatentState> {
        self.history.last()
    }

    /// Runs previous action (when a previous step exists), screen summary,
    /// progression and mistakes for `step`, in that order.
    pub fn update_step(
        &mut self,
        session: &mut LlmSession,
        step: usize,
        cleaned_goal: &str,
        screen: &ScreenDescription,
    ) -> Result<LatentState, LatentError> {
        let fail = |aspect| move |source| LatentError { aspect, source };
        let mut state = LatentState {
            step,
            ..Default::default()
        };

        let mut last_inferred = None;
        if step > 0 {
            if let (Some(prev), Some(cmd)) = (&self.prev_screen, &self.last_commanded) {
                let inferred = infer_previous_action(session, cmd, prev, screen)
                    .map_err(fail(LatentAspect::PreviousAction))?;
                self.inferred_actions.push(inferred.clone());
                state
                    .estimates
                    .insert(LatentAspect::PreviousAction, inferred.clone());
                last_inferred = Some(inferred);
            }
        }

        let summary = infer_screen_summary(session, screen, last_inferred.as_deref())
            .map_err(fail(LatentAspect::ScreenSummary))?;
        state
            .estimates
            .insert(LatentAspect::ScreenSummary, summary.clone());

        let progression = infer_progression(session, &self.inferred_actions, &summary, screen)
            .map_err(fail(LatentAspect::Progression))?;
        state
            .estimates
            .insert(LatentAspect::Progression, progression.clone());

        let mistakes = infer_mistakes(session, cleaned_goal, &progression, screen)
            .map_err(fail(LatentAspect::Mistakes))?;
        state.estimates.insert(LatentAspect::Mistakes, mistakes);

        self.prev_screen = Some(screen.clone());
        self.history.push(state.clone());
        Ok(state)
    }

    /// Asks whether the task is complete given the planner's candidate action.
    /// Must follow `update_step` for the same step.
    pub fn infer_completion(
        &mut self,
        session: &mut LlmSession,
        cleaned_goal: &str,
        candidate: &str,
    ) -> Result<(bool, String), LatentError> {
        let summary = self
            .current()
            .and_then(|s| s.get(LatentAspect::ScreenSummary))
            .unwrap_or_default()
            .to_string();
        let (done, raw) = infer_completion(
            session,
            cleaned_goal,
            &self.inferred_actions,
            &summary,
            candidate,
        )
        .map_err(|source| LatentError {
            aspect: LatentAspect::Completion,
            source,
        })?;
        if let Some(state) = self.history.last_mut() {
            state
                .estimates
                .insert(LatentAspect::Completion, raw.clone());
            state.done = Some(done);
        }
        Ok((done, raw))
    }

    /// Records the command issued at the end of the current step.
    pub fn record_command(&mut self, commanded: &str) {
        self.last_commanded = Some(commanded.to_string());
    }
}
