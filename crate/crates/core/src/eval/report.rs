//! Scoring whole traces and aggregating them into tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::aspects::{score_latent, AspectAccuracy, HARD_ASPECTS};
use super::baselines::{baseline_steps, BaselineStep};
use super::episode::{score_episode, EpisodeMetrics, StopOutcome};
use super::failures::{classify_failure, FailureCause};
use super::EvalError;
use crate::latent::LatentAspect;
use crate::planner::ReasoningMethod;
use crate::sim::Suite;
use crate::trace::EpisodeTrace;

pub const POOLED: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEpisode {
    pub suite: String,
    pub task_id: String,
    pub method: ReasoningMethod,
    pub metrics: EpisodeMetrics,
    pub latent: AspectAccuracy,
    pub failure: Option<FailureCause>,
    pub baseline: Vec<BaselineStep>,
}

pub fn score_trace(trace: &EpisodeTrace, suite: &Suite) -> Result<ScoredEpisode, EvalError> {
    let task = suite.task(&trace.header.task_id).ok_or_else(|| {
        EvalError::Mismatch(format!(
            "task {:?} is not in suite {:?}",
            trace.header.task_id, suite.name
        ))
    })?;
    Ok(ScoredEpisode {
        suite: suite.name.clone(),
        task_id: task.id.clone(),
        method: trace.header.method,
        metrics: score_episode(trace, task)?,
        latent: score_latent(trace, task),
        failure: classify_failure(trace, task),
        baseline: baseline_steps(trace),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub suite: String,
    pub method: ReasoningMethod,
    pub episodes: usize,
    pub task_success: f64,
    pub strict_stop_success: f64,
    pub partial_completion: f64,
    pub premature_stop: f64,
    pub stop_outcomes: BTreeMap<StopOutcome, usize>,
    pub aspects: AspectAccuracy,
    pub failures: BTreeMap<FailureCause, usize>,
}

fn summarize_group(suite: &str, method: ReasoningMethod, eps: &[&ScoredEpisode]) -> MethodSummary {
    let n = eps.len() as f64;
    let rate = |f: &dyn Fn(&ScoredEpisode) -> bool| eps.iter().filter(|e| f(e)).count() as f64 / n;
    let mut aspects = AspectAccuracy::default();
    let mut stop_outcomes = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for e in eps {
        aspects.merge(&e.latent);
        *stop_outcomes.entry(e.metrics.stop_outcome).or_insert(0) += 1;
        if let Some(f) = e.failure {
            *failures.entry(f).or_insert(0) += 1;
        }
    }
    MethodSummary {
        suite: suite.to_string(),
        method,
        episodes: eps.len(),
        task_success: rate(&|e| e.metrics.task_success),
        strict_stop_success: rate(&|e| e.metrics.strict_stop_success),
        partial_completion: eps.iter().map(|e| e.metrics.partial_fraction).sum::<f64>() / n,
        premature_stop: rate(&|e| e.metrics.stop_outcome == StopOutcome::Premature),
        stop_outcomes,
        aspects,
        failures,
    }
}

/// One row per (suite, method), plus pooled rows when several suites appear.
pub fn summarize(episodes: &[ScoredEpisode]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<(String, ReasoningMethod), Vec<&ScoredEpisode>> = BTreeMap::new();
    let mut pooled: BTreeMap<ReasoningMethod, Vec<&ScoredEpisode>> = BTreeMap::new();
    for e in episodes {
        groups
            .entry((e.suite.clone(), e.method))
            .or_default()
            .push(e);
        pooled.entry(e.method).or_default().push(e);
    }
    let suites: std::collections::BTreeSet<&str> =
        episodes.iter().map(|e| e.suite.as_str()).collect();
    let mut out: Vec<MethodSummary> = groups
        .iter()
        .map(|((s, m), eps)| summarize_group(s, *m, eps))
        .collect();
    if suites.len() > 1 {
        out.extend(
            pooled
                .iter()
                .map(|(m, eps)| summarize_group(POOLED, *m, eps)),
        );
    }
    out
}

fn fmt_rate(x: f64) -> String {
    format!("{x:.3}")
}

pub fn metrics_tsv(rows: &[MethodSummary]) -> String {
    let mut s = String::from("method\tsuite\tepisodes\ttask_success\tstrict_stop_success\tpartial_completion\tpremature_stop\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            r.suite,
            r.episodes,
            fmt_rate(r.task_success),
            fmt_rate(r.strict_stop_success),
            fmt_rate(r.partial_completion),
            fmt_rate(r.premature_stop)
        );
    }
    s
}

/// Latent methods only; minus variants estimate nothing.
pub fn aspects_tsv(rows: &[MethodSummary]) -> String {
    let mut s = String::from("method\tsuite\taspect\tcorrect\ttotal\taccuracy\thard_correct\thard_total\thard_accuracy\n");
    let acc = |c: super::aspects::Counts| {
        c.accuracy()
            .map(fmt_rate)
            .unwrap_or_else(|| "unscored".into())
    };
    for r in rows.iter().filter(|r| r.method.uses_latent_state()) {
        for aspect in LatentAspect::ALL {
            let c = r.aspects.counts(aspect);
            let (hc, hard) = if HARD_ASPECTS.contains(&aspect) {
                let h = r.aspects.hard_counts(aspect);
                ((h.correct.to_string(), h.total.to_string()), acc(h))
            } else {
                (("-".into(), "-".into()), "-".into())
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.method,
                r.suite,
                aspect.as_str(),
                c.correct,
                c.total,
                acc(c),
                hc.0,
                hc.1,
                hard
            );
        }
    }
    s
}

pub fn failures_tsv(rows: &[MethodSummary]) -> String {
    let mut s = String::from("method\tsuite\tfailed");
    for c in FailureCause::ALL {
        let _ = write!(s, "\t{}", c.as_str());
    }
    s.push('\n');
    for r in rows {
        let failed: usize = r.failures.values().sum();
        let _ = write!(s, "{}\t{}\t{}", r.method, r.suite, failed);
        for c in FailureCause::ALL {
            let k = r.failures.get(&c).copied().unwrap_or(0);
            let frac = if failed == 0 {
                0.0
            } else {
                k as f64 / failed as f64
            };
            let _ = write!(s, "\t{}", fmt_rate(frac));
        }
        s.push('\n');
    }
    s
}
