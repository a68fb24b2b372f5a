//! The episode loop: observe, estimate latent state, plan, decide whether
//! to stop, ground, act.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{LlmError, ParseError, SimError};
use crate::grounder::{ground, GoalSlot};
use crate::latent::LatentChain;
use crate::llm::{CompletionBackend, LlmSession, ScriptedBackend};
use crate::oracle::PolicyOracle;
use crate::planner::{
    normalize_goal, Planner, PlannerDecision, PlannerError, PlannerInput, ReasoningMethod,
    UNKNOWN_ACTION,
};
use crate::screen::observe_tree;
use crate::sim::{
    check_termination, AbortCause, EnvConfig, Environment, Suite, TaskSpec, TerminationReason,
    World,
};
use crate::trace::{
    BackendDescriptor, EndRecord, EpisodeTrace, StepRecord, TraceHeader, TRACE_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub method: ReasoningMethod,
    #[serde(default)]
    pub goal_slot: GoalSlot,
}

/// Everything that identifies an episode apart from the backend instance.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub world: Arc<World>,
    pub task: TaskSpec,
    pub env: EnvConfig,
    pub suite_path: String,
    pub backend: BackendDescriptor,
}

fn abort_cause(e: &LlmError) -> AbortCause {
    if e.is_fixture_gap() {
        AbortCause::FixtureGap
    } else {
        AbortCause::Backend
    }
}

/// Runs one episode to termination. Backend failures end the episode with
/// an `Aborted` reason; only configuration problems are returned as errors.
pub fn run_episode(
    spec: &EpisodeSpec,
    config: AgentConfig,
    backend: Arc<dyn CompletionBackend>,
) -> Result<EpisodeTrace, SimError> {
    let mut env = Environment::reset(spec.world.clone(), &spec.task, spec.env)?;
    let dims = spec.env.dims;
    let mut session = LlmSession::new(backend);
    let task = &spec.task;

    let normalized = normalize_goal(&mut session, &task.goal);
    let mut header = TraceHeader {
        version: TRACE_VERSION,
        task_id: task.id.clone(),
        suite: spec.suite_path.clone(),
        method: config.method,
        env: spec.env,
        backend: spec.backend.clone(),
        goal_slot: config.goal_slot,
        goal: task.goal.clone(),
        cleaned_goal: String::new(),
        normalize_calls: session.drain(),
    };
    let mut steps = Vec::new();
    let finish =
        |env: &mut Environment, steps: Vec<StepRecord>, header: TraceHeader, reason, pending| {
            env.terminate();
            EpisodeTrace {
                header,
                end: EndRecord {
                    steps: env.steps(),
                    termination: reason,
                    pending_calls: pending,
                    truth: env.ground_truth().clone(),
                },
                steps,
            }
        };
    let aborted = |e: &LlmError| TerminationReason::Aborted {
        cause: abort_cause(e),
        message: e.to_string(),
    };

    let cleaned = match normalized {
        Ok(g) => g,
        Err(e) => return Ok(finish(&mut env, steps, header, aborted(&e), Vec::new())),
    };
    header.cleaned_goal = cleaned.clone();

    let plus = config.method.uses_latent_state();
    let mut planner = Planner::new(config.method);
    let mut chain = LatentChain::new();
    let mut commands: Vec<String> = Vec::new();

    loop {
        if let Some(reason) = check_termination(&commands, env.steps(), task.max_steps, false) {
            return Ok(finish(&mut env, steps, header, reason, Vec::new()));
        }
        let t = env.steps();
        let obs = observe_tree(env.observe(), dims);

        let latent = if plus {
            match chain.update_step(&mut session, t, &cleaned, &obs.description) {
                Ok(state) => Some(state),
                Err(e) => {
                    return Ok(finish(
                        &mut env,
                        steps,
                        header,
                        aborted(&e.source),
                        session.drain(),
                    ))
                }
            }
        } else {
            None
        };
        let input = PlannerInput {
            cleaned_goal: &cleaned,
            screen: &obs.description,
            commanded_history: &commands,
            progression: latent
                .as_ref()
                .and_then(|s| s.get(crate::latent::LatentAspect::Progression)),
            mistakes: latent
                .as_ref()
                .and_then(|s| s.get(crate::latent::LatentAspect::Mistakes)),
        };
        let decision = match planner.select(&mut session, &input) {
            Ok(d) => d,
            Err(PlannerError::Backend(e)) => {
                return Ok(finish(
                    &mut env,
                    steps,
                    header,
                    aborted(&e),
                    session.drain(),
                ))
            }
            Err(PlannerError::NoAnswer(_)) => PlannerDecision {
                commanded: UNKNOWN_ACTION.to_string(),
                thought: None,
                parsed_samples: Vec::new(),
                vote: None,
                declares_done: false,
            },
            Err(e @ PlannerError::MissingLatent(_)) => {
                let message = e.to_string();
                let reason = TerminationReason::Aborted {
                    cause: AbortCause::Backend,
                    message,
                };
                return Ok(finish(&mut env, steps, header, reason, session.drain()));
            }
        };

        let stop = if plus {
            match chain.infer_completion(&mut session, &cleaned, &decision.commanded) {
                Ok((done, _)) => done,
                Err(e) => {
                    return Ok(finish(
                        &mut env,
                        steps,
                        header,
                        aborted(&e.source),
                        session.drain(),
                    ))
                }
            }
        } else {
            decision.declares_done
        };
        let latent = if plus { chain.current().cloned() } else { None };
        let observation = obs.description.render();

        if stop {
            steps.push(StepRecord {
                step: t,
                observation,
                calls: session.drain(),
                latent,
                planner: decision,
                stopped: true,
                grounding: None,
                events: Vec::new(),
            });
            return Ok(finish(
                &mut env,
                steps,
                header,
                TerminationReason::AgentStopped,
                Vec::new(),
            ));
        }

        chain.record_command(&decision.commanded);
        commands.push(decision.commanded.clone());
        let slot = match config.goal_slot {
            GoalSlot::StepCommand => decision.commanded.as_str(),
            GoalSlot::EpisodeGoal => cleaned.as_str(),
        };
        let mut outcome = match ground(&mut session, &decision.commanded, slot, &obs.view) {
            Ok(o) => o,
            Err(e) => {
                return Ok(finish(
                    &mut env,
                    steps,
                    header,
                    aborted(&e),
                    session.drain(),
                ))
            }
        };
        let report = env.step(
            &decision.commanded,
            outcome.grounded.as_ref(),
            outcome.fault,
        )?;
        outcome.performed = report.performed;
        outcome.fault = report.fault;
        steps.push(StepRecord {
            step: t,
            observation,
            calls: session.drain(),
            latent,
            planner: decision,
            stopped: false,
            grounding: Some(outcome),
            events: report.events,
        });
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trace task {0:?} is not in the suite")]
    UnknownTask(String),
    #[error("traces from {0} backends cannot be replayed")]
    NotReplayable(&'static str),
    #[error("cannot load script {path}: {message}")]
    Script { path: String, message: String },
}

/// Rebuilds the backend named in a trace header.
pub fn backend_for(
    descriptor: &BackendDescriptor,
    suite: &Suite,
) -> Result<Arc<dyn CompletionBackend>, ReplayError> {
    match descriptor {
        BackendDescriptor::Oracle => Ok(Arc::new(PolicyOracle::from_suite(suite))),
        BackendDescriptor::Scripted { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| ReplayError::Script {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let backend = ScriptedBackend::from_json(&text).map_err(|e| ReplayError::Script {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Ok(Arc::new(backend))
        }
        BackendDescriptor::Http { .. } => Err(ReplayError::NotReplayable("http")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Match,
    /// `line` is zero-based; `step` is absent for header and end records.
    Diverged {
        line: usize,
        step: Option<usize>,
        expected: String,
        actual: String,
    },
}

/// Re-executes the episode described by `trace_text` and compares the
/// regenerated trace line by line.
pub fn replay(trace_text: &str, suite: &Suite) -> Result<ReplayOutcome, ReplayError> {
    let trace = EpisodeTrace::from_jsonl(trace_text)?;
    let h = &trace.header;
    let task = suite
        .task(&h.task_id)
        .ok_or_else(|| ReplayError::UnknownTask(h.task_id.clone()))?;
    let backend = backend_for(&h.backend, suite)?;
    let spec = EpisodeSpec {
        world: suite.world.clone(),
        task: task.clone(),
        env: h.env,
        suite_path: h.suite.clone(),
        backend: h.backend.clone(),
    };
    let config = AgentConfig {
        method: h.method,
        goal_slot: h.goal_slot,
    };
    let rerun = run_episode(&spec, config, backend)?;
    Ok(compare_lines(trace_text, &rerun.to_jsonl()))
}

/// First differing non-empty line of two traces.
pub fn compare_lines(expected: &str, actual: &str) -> ReplayOutcome {
    let exp: Vec<&str> = expected.lines().filter(|l| !l.trim().is_empty()).collect();
    let act: Vec<&str> = actual.lines().filter(|l| !l.trim().is_empty()).collect();
    let n = exp.len().max(act.len());
    for i in 0..n {
        let (e, a) = (
            exp.get(i).copied().unwrap_or(""),
            act.get(i).copied().unwrap_or(""),
        );
        if e != a {
            let step_of = |line: &str| {
                serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .filter(|v| v["record"] == "step")
                    .and_then(|v| v["step"].as_u64())
                    .map(|s| s as usize)
            };
            let step = step_of(e).or_else(|| step_of(a));
            return ReplayOutcome::Diverged {
                line: i,
                step,
                expected: e.to_string(),
                actual: a.to_string(),
            };
        }
    }
    ReplayOutcome::Match
}
