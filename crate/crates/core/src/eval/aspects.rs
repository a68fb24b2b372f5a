//! Per-aspect accuracy of latent-state estimates against simulator truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fuzzy::fuzzy_match;
use crate::latent::{LatentAspect, NO_ACTION_ANSWER, NO_MISTAKES};
use crate::sim::{ActionTruth, EpisodeTruth, TaskSpec};
use crate::trace::EpisodeTrace;

/// Aspects that get a hard-case subset.
pub const HARD_ASPECTS: [LatentAspect; 3] = [
    LatentAspect::PreviousAction,
    LatentAspect::Mistakes,
    LatentAspect::Completion,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

impl Counts {
    pub fn record(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    pub fn merge(&mut self, other: Counts) {
        self.correct += other.correct;
        self.total += other.total;
    }

    /// `None` when nothing was scored.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectAccuracy {
    pub aspects: BTreeMap<LatentAspect, Counts>,
    pub hard: BTreeMap<LatentAspect, Counts>,
}

impl Default for AspectAccuracy {
    fn default() -> Self {
        Self {
            aspects: LatentAspect::ALL
                .iter()
                .map(|a| (*a, Counts::default()))
                .collect(),
            hard: HARD_ASPECTS
                .iter()
                .map(|a| (*a, Counts::default()))
                .collect(),
        }
    }
}

impl AspectAccuracy {
    fn record(&mut self, aspect: LatentAspect, correct: bool, hard: bool) {
        self.aspects.entry(aspect).or_default().record(correct);
        if hard {
            self.hard.entry(aspect).or_default().record(correct);
        }
    }

    pub fn merge(&mut self, other: &AspectAccuracy) {
        for (a, c) in &other.aspects {
            self.aspects.entry(*a).or_default().merge(*c);
        }
        for (a, c) in &other.hard {
            self.hard.entry(*a).or_default().merge(*c);
        }
    }

    pub fn counts(&self, aspect: LatentAspect) -> Counts {
        self.aspects.get(&aspect).copied().unwrap_or_default()
    }

    pub fn hard_counts(&self, aspect: LatentAspect) -> Counts {
        self.hard.get(&aspect).copied().unwrap_or_default()
    }
}

pub fn claims_no_action(estimate: &str) -> bool {
    fuzzy_match(NO_ACTION_ANSWER, estimate) || estimate.to_lowercase().contains("no action")
}

pub fn claims_no_mistakes(estimate: &str) -> bool {
    fuzzy_match(NO_MISTAKES, estimate) || estimate.to_lowercase().contains("no mistake")
}

/// Whether a previous-action estimate describes what really happened.
/// `changed` says whether the action visibly altered the device.
pub fn previous_action_correct(estimate: &str, action: &ActionTruth, changed: bool) -> bool {
    let none = claims_no_action(estimate);
    match action.fault {
        Some(f) if f.is_no_action() => none,
        Some(_) => !none && fuzzy_match(&action.performed_description, estimate),
        // A faithful action that changed nothing may be described either way.
        None if !changed => none || fuzzy_match(&action.commanded, estimate),
        None => !none && fuzzy_match(&action.commanded, estimate),
    }
}

fn changed_between(truth: &EpisodeTruth, t: usize) -> bool {
    match (truth.states.get(t - 1), truth.states.get(t)) {
        (Some(a), Some(b)) => {
            a.snapshot.screen != b.snapshot.screen
                || a.snapshot.vars != b.snapshot.vars
                || a.snapshot.popup != b.snapshot.popup
        }
        _ => true,
    }
}

pub fn score_latent(trace: &EpisodeTrace, task: &TaskSpec) -> AspectAccuracy {
    let truth = &trace.end.truth;
    let mut acc = AspectAccuracy::default();
    for latent in trace.steps.iter().filter_map(|s| s.latent.as_ref()) {
        let t = latent.step;
        let Some(state) = truth.states.get(t) else {
            continue;
        };
        let screen = &state.snapshot.screen;

        if let (Some(est), Some(action)) = (
            latent.get(LatentAspect::PreviousAction),
            t.checked_sub(1).and_then(|p| truth.actions.get(p)),
        ) {
            let ok = previous_action_correct(est, action, changed_between(truth, t));
            acc.record(LatentAspect::PreviousAction, ok, !action.is_faithful());
        }
        if let (Some(est), Some(reference)) = (
            latent.get(LatentAspect::ScreenSummary),
            task.references.screen_summary.get(screen),
        ) {
            acc.record(
                LatentAspect::ScreenSummary,
                fuzzy_match(reference, est),
                false,
            );
        }
        if let (Some(est), Some(reference)) = (
            latent.get(LatentAspect::Progression),
            task.references.progression.get(screen),
        ) {
            acc.record(
                LatentAspect::Progression,
                fuzzy_match(reference, est),
                false,
            );
        }
        if let Some(est) = latent.get(LatentAspect::Mistakes) {
            let outstanding = !state.outstanding_mistakes.is_empty();
            acc.record(
                LatentAspect::Mistakes,
                claims_no_mistakes(est) != outstanding,
                outstanding,
            );
        }
        if let Some(done) = latent.done {
            acc.record(
                LatentAspect::Completion,
                done == state.complete,
                state.complete,
            );
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounder::GroundingFault;

    fn action(fault: Option<GroundingFault>) -> ActionTruth {
        ActionTruth {
            step: 0,
            commanded: "tap \"Display\"".into(),
            grounded: None,
            performed: None,
            performed_description: "clicked \"Sound\"".into(),
            fault,
            events: Vec::new(),
        }
    }

    #[test]
    fn previous_action_cases() {
        let faithful = action(None);
        assert!(previous_action_correct(" tap \"Display\"", &faithful, true));
        assert!(!previous_action_correct(
            "No action was performed.",
            &faithful,
            true
        ));
        assert!(previous_action_correct(
            "No action was performed.",
            &faithful,
            false
        ));

        let noop = action(Some(GroundingFault::Noop));
        assert!(previous_action_correct(
            "No action was performed.",
            &noop,
            false
        ));
        assert!(!previous_action_correct("tap \"Display\"", &noop, false));

        let wrong = action(Some(GroundingFault::WrongElement));
        assert!(previous_action_correct("clicked \"Sound\"", &wrong, true));
        assert!(!previous_action_correct("tap \"Display\"", &wrong, true));
    }

    #[test]
    fn mistake_polarity() {
        assert!(claims_no_mistakes(" No mistakes have been made."));
        assert!(!claims_no_mistakes("You tapped the wrong button."));
    }
}
