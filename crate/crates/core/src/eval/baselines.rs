//! Accuracy of constant predictors on the same scored steps.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::trace::EpisodeTrace;

/// Truth labels for one scored step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineStep {
    pub complete: bool,
    /// Whether the action leading into this step was performed as commanded;
    /// absent at the first step.
    pub action_matches: Option<bool>,
    pub mistakes_outstanding: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveBaselines {
    /// Always "not complete".
    pub completion: f64,
    /// Always "the commanded action was performed".
    pub action: f64,
    /// Always "no mistakes".
    pub mistakes: f64,
    pub steps: usize,
}

pub fn naive_baselines(steps: &[BaselineStep]) -> Result<NaiveBaselines, EvalError> {
    if steps.is_empty() {
        return Err(EvalError::Empty("baseline steps"));
    }
    let n = steps.len() as f64;
    let frac = |hits: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    };
    let labelled: Vec<bool> = steps.iter().filter_map(|s| s.action_matches).collect();
    Ok(NaiveBaselines {
        completion: steps.iter().filter(|s| !s.complete).count() as f64 / n,
        action: frac(labelled.iter().filter(|m| **m).count(), labelled.len()),
        mistakes: steps.iter().filter(|s| !s.mistakes_outstanding).count() as f64 / n,
        steps: steps.len(),
    })
}

/// One entry per step at which the agent reasoned.
pub fn baseline_steps(trace: &EpisodeTrace) -> Vec<BaselineStep> {
    let truth = &trace.end.truth;
    trace
        .steps
        .iter()
        .filter_map(|s| {
            let state = truth.states.get(s.step)?;
            Some(BaselineStep {
                complete: state.complete,
                action_matches: s
                    .step
                    .checked_sub(1)
                    .and_then(|p| truth.actions.get(p))
                    .map(|a| a.is_faithful()),
                mistakes_outstanding: !state.outstanding_mistakes.is_empty(),
            })
        })
        .collect()
}
