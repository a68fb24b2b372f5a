//! Task-level metrics for one episode.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::sim::{EpisodeTruth, QuestionWhen, TaskSpec, TerminationReason};
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopOutcome {
    RightTime,
    Premature,
    ExtraSteps,
    DidNotStop,
}

impl StopOutcome {
    pub const ALL: [StopOutcome; 4] = [
        StopOutcome::RightTime,
        StopOutcome::Premature,
        StopOutcome::ExtraSteps,
        StopOutcome::DidNotStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StopOutcome::RightTime => "right_time",
            StopOutcome::Premature => "premature",
            StopOutcome::ExtraSteps => "extra_steps",
            StopOutcome::DidNotStop => "did_not_stop",
        }
    }
}

/// `stop_step` is the step at which the agent declared completion;
/// `first_complete` the first step whose observed state satisfies the goal.
pub fn classify_stop(stop_step: Option<usize>, first_complete: Option<usize>) -> StopOutcome {
    match (stop_step, first_complete) {
        (None, _) => StopOutcome::DidNotStop,
        (Some(_), None) => StopOutcome::Premature,
        (Some(s), Some(k)) if s < k => StopOutcome::Premature,
        (Some(s), Some(k)) if s == k => StopOutcome::RightTime,
        (Some(_), Some(_)) => StopOutcome::ExtraSteps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub task_success: bool,
    pub strict_stop_success: bool,
    pub stop_outcome: StopOutcome,
    pub partial: Vec<bool>,
    pub partial_fraction: f64,
}

pub fn score_episode(trace: &EpisodeTrace, task: &TaskSpec) -> Result<EpisodeMetrics, EvalError> {
    if trace.header.task_id != task.id {
        return Err(EvalError::Mismatch(format!(
            "trace is for task {:?}, scored against {:?}",
            trace.header.task_id, task.id
        )));
    }
    let stop =
        matches!(trace.end.termination, TerminationReason::AgentStopped).then_some(trace.end.steps);
    score_truth(&trace.end.truth, stop, task)
}

/// Scoring from the truth record alone.
pub fn score_truth(
    truth: &EpisodeTruth,
    stop_step: Option<usize>,
    task: &TaskSpec,
) -> Result<EpisodeMetrics, EvalError> {
    let final_state = truth
        .final_state()
        .ok_or_else(|| EvalError::Mismatch("episode has no observed states".into()))?;
    let task_success = truth.ever_complete();
    let stop_outcome = classify_stop(stop_step, truth.first_complete_step());
    let partial: Vec<bool> = task
        .questions
        .iter()
        .map(|q| match q.when {
            QuestionWhen::Ever => truth.states.iter().any(|s| q.predicate.eval(&s.snapshot)),
            QuestionWhen::End => q.predicate.eval(&final_state.snapshot),
        })
        .collect();
    let partial_fraction = if partial.is_empty() {
        0.0
    } else {
        partial.iter().filter(|b| **b).count() as f64 / partial.len() as f64
    };
    Ok(EpisodeMetrics {
        task_success,
        strict_stop_success: task_success && stop_outcome == StopOutcome::RightTime,
        stop_outcome,
        partial,
        partial_fraction,
    })
}
