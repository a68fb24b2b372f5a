//! Root causes of failed episodes.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::sim::{TaskSpec, TerminationReason};
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    ActionSelection,
    Grounding,
    Both,
    Emulator,
}

impl FailureCause {
    pub const ALL: [FailureCause; 4] = [
        FailureCause::ActionSelection,
        FailureCause::Grounding,
        FailureCause::Both,
        FailureCause::Emulator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::ActionSelection => "action_selection",
            FailureCause::Grounding => "grounding",
            FailureCause::Both => "both",
            FailureCause::Emulator => "emulator",
        }
    }
}

/// Fractions in `FailureCause::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureDistribution {
    pub action_selection: f64,
    pub grounding: f64,
    pub both: f64,
    pub emulator: f64,
    pub count: usize,
}

impl FailureDistribution {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.action_selection,
            self.grounding,
            self.both,
            self.emulator,
        ]
    }
}

pub fn aggregate_failures(labels: &[FailureCause]) -> Result<FailureDistribution, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty("failure labels"));
    }
    let n = labels.len() as f64;
    let frac = |c: FailureCause| labels.iter().filter(|l| **l == c).count() as f64 / n;
    Ok(FailureDistribution {
        action_selection: frac(FailureCause::ActionSelection),
        grounding: frac(FailureCause::Grounding),
        both: frac(FailureCause::Both),
        emulator: frac(FailureCause::Emulator),
        count: labels.len(),
    })
}

/// Rule-based tag for an unsuccessful episode; `None` when it succeeded.
/// Aborted runs blame the environment. Otherwise a grounding fault and a
/// faithful step off the task path are blamed on grounding and the
/// planner respectively.
pub fn classify_failure(trace: &EpisodeTrace, task: &TaskSpec) -> Option<FailureCause> {
    let truth = &trace.end.truth;
    if truth.ever_complete() {
        return None;
    }
    if matches!(trace.end.termination, TerminationReason::Aborted { .. }) {
        return Some(FailureCause::Emulator);
    }
    let grounding = truth.actions.iter().any(|a| !a.is_faithful());
    let planner = truth.actions.iter().any(|a| {
        a.is_faithful()
            && truth
                .states
                .get(a.step + 1)
                .is_some_and(|s| !task.on_path(&s.snapshot.screen))
    });
    Some(match (planner, grounding) {
        (true, true) => FailureCause::Both,
        (false, true) => FailureCause::Grounding,
        _ => FailureCause::ActionSelection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counts() {
        use FailureCause::*;
        let d = aggregate_failures(&[Grounding, Grounding, ActionSelection]).unwrap();
        assert_eq!(d.as_array(), [1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0]);
        let d = aggregate_failures(&[Emulator; 4]).unwrap();
        assert_eq!(d.as_array(), [0.0, 0.0, 0.0, 1.0]);
        assert!(aggregate_failures(&[]).is_err());
    }
}
