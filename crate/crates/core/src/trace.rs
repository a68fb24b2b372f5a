//! Line-delimited episode traces.

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::grounder::{GoalSlot, GroundingOutcome};
use crate::latent::LatentState;
use crate::llm::CallRecord;
use crate::planner::{PlannerDecision, ReasoningMethod};
use crate::sim::{EnvConfig, EnvEvent, EpisodeTruth, TerminationReason};

pub const TRACE_VERSION: u32 = 1;

/// Where completions came from, with enough detail to rebuild the backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    Scripted { path: String },
    Oracle,
    Http { base_url: String, model: String },
}

impl BackendDescriptor {
    pub fn is_replayable(&self) -> bool {
        !matches!(self, BackendDescriptor::Http { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub task_id: String,
    pub suite: String,
    pub method: ReasoningMethod,
    pub env: EnvConfig,
    pub backend: BackendDescriptor,
    pub goal_slot: GoalSlot,
    pub goal: String,
    pub cleaned_goal: String,
    pub normalize_calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Planner-facing description of the observation.
    pub observation: String,
    pub calls: Vec<CallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentState>,
    pub planner: PlannerDecision,
    pub stopped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EnvEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub steps: usize,
    pub termination: TerminationReason,
    /// Calls made during a step that was aborted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending_calls: Vec<CallRecord>,
    pub truth: EpisodeTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(StepRecord),
    End(EndRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub end: EndRecord,
}

impl EpisodeTrace {
    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = vec![TraceRecord::Header(self.header.clone())];
        out.extend(self.steps.iter().cloned().map(TraceRecord::Step));
        out.push(TraceRecord::End(self.end.clone()));
        out
    }

    pub fn to_lines(&self) -> Vec<String> {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serialization"))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = self.to_lines().join("\n");
        s.push('\n');
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ParseError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let path = format!("line {}", i + 1);
            let record: TraceRecord = serde_json::from_str(line).map_err(|e| ParseError::Json {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let misplaced = |what: &str| ParseError::Structure {
                path: path.clone(),
                message: format!("unexpected {what} record"),
            };
            match record {
                TraceRecord::Header(h) if header.is_none() && end.is_none() => header = Some(h),
                TraceRecord::Step(s) if header.is_some() && end.is_none() => steps.push(s),
                TraceRecord::End(e) if header.is_some() && end.is_none() => end = Some(e),
                TraceRecord::Header(_) => return Err(misplaced("header")),
                TraceRecord::Step(_) => return Err(misplaced("step")),
                TraceRecord::End(_) => return Err(misplaced("end")),
            }
        }
        let missing = |what: &str| ParseError::Structure {
            path: "$".into(),
            message: format!("trace has no {what} record"),
        };
        Ok(Self {
            header: header.ok_or_else(|| missing("header"))?,
            steps,
            end: end.ok_or_else(|| missing("end"))?,
        })
    }

    /// Commands issued at each executed step.
    pub fn commanded(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter(|s| !s.stopped)
            .map(|s| s.planner.commanded.as_str())
            .collect()
    }

    /// Step at which the agent stopped, if it did.
    pub fn stop_step(&self) -> Option<usize> {
        matches!(self.end.termination, TerminationReason::AgentStopped).then_some(self.end.steps)
    }
}
