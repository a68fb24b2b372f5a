//! Ground-truth records kept by the environment for scoring.

use serde::{Deserialize, Serialize};

use super::spec::DeviceSnapshot;
use crate::grounder::{GroundedAction, GroundingFault};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EnvEvent {
    /// The tap hit no keyed element.
    Miss,
    /// An element was hit but nothing is bound to it.
    NoEffect {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        element: Option<String>,
    },
    Transition {
        from: String,
        to: String,
    },
    PopupShown,
    PopupDismissed,
    Waited,
    StaleObservation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MistakeKind {
    Fault { fault: GroundingFault },
    OffPath { screen: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeEntry {
    /// Step of the action that caused it.
    pub step: usize,
    #[serde(flatten)]
    pub kind: MistakeKind,
}

/// The device state the agent observes at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTruth {
    pub step: usize,
    pub snapshot: DeviceSnapshot,
    pub complete: bool,
    pub outstanding_mistakes: Vec<MistakeEntry>,
}

/// What happened to the action taken at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTruth {
    pub step: usize,
    pub commanded: String,
    pub grounded: Option<GroundedAction>,
    pub performed: Option<GroundedAction>,
    pub performed_description: String,
    pub fault: Option<GroundingFault>,
    pub events: Vec<EnvEvent>,
}

impl ActionTruth {
    pub fn is_faithful(&self) -> bool {
        self.fault.is_none()
    }
}

/// `states[t]` is observed at step `t`; `actions[t]` leads from `states[t]`
/// to `states[t + 1]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTruth {
    pub states: Vec<StateTruth>,
    pub actions: Vec<ActionTruth>,
}

impl EpisodeTruth {
    pub fn first_complete_step(&self) -> Option<usize> {
        self.states.iter().position(|s| s.complete)
    }

    pub fn ever_complete(&self) -> bool {
        self.first_complete_step().is_some()
    }

    pub fn final_state(&self) -> Option<&StateTruth> {
        self.states.last()
    }
}
