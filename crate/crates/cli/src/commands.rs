use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use latent_ui::agent::{backend_for, replay, run_episode, AgentConfig, EpisodeSpec, ReplayOutcome};
use latent_ui::eval::report::{aspects_tsv, failures_tsv, metrics_tsv};
use latent_ui::eval::{
    naive_baselines, paired_permutation_test, score_trace, summarize, BaselineStep,
    PermutationMode, ScoredEpisode,
};
use latent_ui::llm::{CompletionBackend, HttpBackend, HttpConfig, ScriptedBackend};
use latent_ui::oracle::PolicyOracle;
use latent_ui::sim::{AbortCause, Suite, TerminationReason};
use latent_ui::trace::{BackendDescriptor, EpisodeTrace};
use rayon::prelude::*;

use crate::config::{RunConfig, DEFAULT_HTTP_TIMEOUT_SECS};
use crate::error::CliError;

pub fn load_suite(path: &Path) -> Result<Suite, CliError> {
    Suite::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Builds one backend per episode so scripted counters never leak between them.
fn backend_factory(
    config: &RunConfig,
    suite: &Suite,
) -> Result<Box<dyn Fn() -> Arc<dyn CompletionBackend> + Sync>, CliError> {
    Ok(match &config.backend {
        BackendDescriptor::Oracle => {
            let oracle = Arc::new(PolicyOracle::from_suite(suite));
            Box::new(move || oracle.clone() as Arc<dyn CompletionBackend>)
        }
        BackendDescriptor::Scripted { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read script {path}: {e}")))?;
            let script = ScriptedBackend::from_json(&text)
                .map_err(|e| CliError::Config(format!("script {path}: {e}")))?;
            Box::new(move || Arc::new(script.fresh()) as Arc<dyn CompletionBackend>)
        }
        BackendDescriptor::Http { base_url, model } => {
            let http = HttpBackend::new(HttpConfig {
                base_url: base_url.clone(),
                model: model.clone(),
                timeout_secs: config
                    .http_timeout_secs
                    .unwrap_or(DEFAULT_HTTP_TIMEOUT_SECS),
            })
            .map_err(|e| CliError::Backend(e.to_string()))?;
            let http: Arc<dyn CompletionBackend> = Arc::new(
                latent_ui::llm::RetryingBackend::new(http, Default::default())
                    .map_err(|e| CliError::Backend(e.to_string()))?,
            );
            Box::new(move || http.clone())
        }
    })
}

pub fn trace_file_name(task_id: &str, repeat: usize, repeats: usize) -> String {
    if repeats == 1 {
        format!("{task_id}.jsonl")
    } else {
        format!("{task_id}.r{repeat}.jsonl")
    }
}

/// Runs every selected episode, writes one trace per episode plus a summary.
/// Returns the summary text.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    let suite = load_suite(&config.suite)?;
    for id in &config.tasks {
        if suite.task(id).is_none() {
            return Err(CliError::Config(format!(
                "task {id:?} is not in suite {:?}",
                suite.name
            )));
        }
    }
    let tasks: Vec<(usize, _)> = suite
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| config.tasks.is_empty() || config.tasks.contains(&t.id))
        .collect();
    let factory = backend_factory(config, &suite)?;
    std::fs::create_dir_all(&config.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", config.out.display())))?;
    let resolved = serde_json::to_string_pretty(config).expect("config serialization");
    write_file(&config.out.join("config.json"), &(resolved + "\n"))?;

    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..config.repeats).map(move |r| (t, r)))
        .collect();
    let agent = AgentConfig {
        method: config.method,
        goal_slot: config.goal_slot,
    };
    let suite_path = config.suite.display().to_string();
    let run_one = |&(t, r): &(usize, usize)| -> Result<(String, EpisodeTrace), CliError> {
        let (index, task) = tasks[t];
        let spec = EpisodeSpec {
            world: suite.world.clone(),
            task: task.clone(),
            env: config.env_for_episode(index, r),
            suite_path: suite_path.clone(),
            backend: config.backend.clone(),
        };
        let trace =
            run_episode(&spec, agent, factory()).map_err(|e| CliError::Config(e.to_string()))?;
        let name = trace_file_name(&task.id, r, config.repeats);
        write_file(&config.out.join(&name), &trace.to_jsonl())?;
        Ok((name, trace))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<(String, EpisodeTrace)> =
        pool.install(|| jobs.par_iter().map(run_one).collect::<Result<_, _>>())?;

    let mut summary = String::from("trace\ttask\ttermination\tsteps\ttask_success\tstrict_stop_success\tstop_outcome\tpartial\n");
    let mut backend_failures = Vec::new();
    for (name, trace) in &results {
        let scored = score_trace(trace, &suite).map_err(|e| CliError::Config(e.to_string()))?;
        let termination = match &trace.end.termination {
            TerminationReason::AgentStopped => "agent_stopped".to_string(),
            TerminationReason::RepeatedActions => "repeated_actions".to_string(),
            TerminationReason::MaxSteps => "max_steps".to_string(),
            TerminationReason::Aborted { cause, message } => {
                if *cause == AbortCause::Backend {
                    backend_failures.push(format!("{name}: {message}"));
                }
                format!(
                    "aborted:{}",
                    if *cause == AbortCause::Backend {
                        "backend"
                    } else {
                        "fixture_gap"
                    }
                )
            }
        };
        let m = &scored.metrics;
        let _ = writeln!(
            summary,
            "{name}\t{}\t{termination}\t{}\t{}\t{}\t{}\t{:.3}",
            scored.task_id,
            trace.end.steps,
            m.task_success,
            m.strict_stop_success,
            m.stop_outcome.as_str(),
            m.partial_fraction
        );
    }
    write_file(&config.out.join("summary.tsv"), &summary)?;
    if !backend_failures.is_empty() {
        return Err(CliError::Backend(format!(
            "{} episode(s) aborted; traces were written. {}",
            backend_failures.len(),
            backend_failures.join("; ")
        )));
    }
    Ok(summary)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Trace files in `dir`, sorted by name.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no trace files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub fn load_traces(dir: &Path) -> Result<Vec<(String, EpisodeTrace)>, CliError> {
    trace_files(dir)?
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let trace = EpisodeTrace::from_jsonl(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            Ok((name, trace))
        })
        .collect()
}

fn suite_for(traces: &[(String, EpisodeTrace)], suite: Option<&Path>) -> Result<Suite, CliError> {
    match suite {
        Some(p) => load_suite(p),
        None => load_suite(Path::new(&traces[0].1.header.suite)),
    }
}

fn score_all(
    traces: &[(String, EpisodeTrace)],
    suite: &Suite,
) -> Result<Vec<ScoredEpisode>, CliError> {
    traces
        .iter()
        .map(|(name, t)| {
            score_trace(t, suite).map_err(|e| CliError::Config(format!("{name}: {e}")))
        })
        .collect()
}

fn baselines_text(scored: &[ScoredEpisode]) -> Result<String, CliError> {
    let steps: Vec<BaselineStep> = scored
        .iter()
        .flat_map(|e| e.baseline.iter().copied())
        .collect();
    let b = naive_baselines(&steps).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(format!(
        "baseline\taccuracy\tsteps\ncompletion_naive\t{:.4}\t{}\naction_naive\t{:.4}\t{}\nmistakes_naive\t{:.4}\t{}\n",
        b.completion, b.steps, b.action, b.steps, b.mistakes, b.steps
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMetric {
    TaskSuccess,
    StrictStopSuccess,
    Partial,
}

impl PairMetric {
    fn value(self, e: &ScoredEpisode) -> f64 {
        match self {
            PairMetric::TaskSuccess => f64::from(u8::from(e.metrics.task_success)),
            PairMetric::StrictStopSuccess => f64::from(u8::from(e.metrics.strict_stop_success)),
            PairMetric::Partial => e.metrics.partial_fraction,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PairMetric::TaskSuccess => "task_success",
            PairMetric::StrictStopSuccess => "strict_stop_success",
            PairMetric::Partial => "partial_completion",
        }
    }
}

/// Pairs episodes of two runs by trace file name.
fn paired(
    a: &[(String, ScoredEpisode)],
    b: &[(String, ScoredEpisode)],
    metric: PairMetric,
) -> Result<Vec<(f64, f64)>, CliError> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|(name, ea)| {
            b.iter()
                .find(|(n, _)| n == name)
                .map(|(_, eb)| (metric.value(ea), metric.value(eb)))
        })
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Config(
            "the two runs share no trace file names".into(),
        ));
    }
    Ok(pairs)
}

fn comparison_text(
    a: &[(String, ScoredEpisode)],
    b: &[(String, ScoredEpisode)],
    mode: PermutationMode,
) -> Result<String, CliError> {
    let mut s = String::from("metric\tpairs\tmean_a\tmean_b\tp_value\n");
    for metric in [
        PairMetric::TaskSuccess,
        PairMetric::StrictStopSuccess,
        PairMetric::Partial,
    ] {
        let pairs = paired(a, b, metric)?;
        let n = pairs.len() as f64;
        let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let p = paired_permutation_test(&pairs, mode);
        let _ = writeln!(
            s,
            "{}\t{}\t{mean_a:.3}\t{mean_b:.3}\t{p:.4}",
            metric.name(),
            pairs.len()
        );
    }
    Ok(s)
}

fn named_scores(
    dir: &Path,
    suite: Option<&Path>,
) -> Result<(Suite, Vec<(String, ScoredEpisode)>), CliError> {
    let traces = load_traces(dir)?;
    let suite = suite_for(&traces, suite)?;
    let scored = score_all(&traces, &suite)?;
    Ok((
        suite,
        traces.into_iter().map(|(n, _)| n).zip(scored).collect(),
    ))
}

pub fn score(
    dir: &Path,
    suite: Option<&Path>,
    compare: Option<&Path>,
    mode: PermutationMode,
) -> Result<String, CliError> {
    let (suite, named) = named_scores(dir, suite)?;
    let scored: Vec<ScoredEpisode> = named.iter().map(|(_, e)| e.clone()).collect();
    let rows = summarize(&scored);
    let mut out = format!(
        "# metrics\n{}\n# aspects\n{}\n# failures\n{}\n# baselines\n{}",
        metrics_tsv(&rows),
        aspects_tsv(&rows),
        failures_tsv(&rows),
        baselines_text(&scored)?
    );
    if let Some(other) = compare {
        let (_, named_b) = named_scores(other, Some(&suite.path))?;
        out.push_str("\n# comparison\n");
        out.push_str(&comparison_text(&named, &named_b, mode)?);
    }
    Ok(out)
}

pub fn baselines(dir: &Path, suite: Option<&Path>) -> Result<String, CliError> {
    let (_, named) = named_scores(dir, suite)?;
    let scored: Vec<ScoredEpisode> = named.into_iter().map(|(_, e)| e).collect();
    baselines_text(&scored)
}

pub fn stats(
    a: &Path,
    b: &Path,
    suite: Option<&Path>,
    mode: PermutationMode,
) -> Result<String, CliError> {
    let (suite, named_a) = named_scores(a, suite)?;
    let (_, named_b) = named_scores(b, Some(&suite.path))?;
    comparison_text(&named_a, &named_b, mode)
}

pub fn replay_file(path: &Path, suite: Option<&Path>) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let trace = EpisodeTrace::from_jsonl(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let suite = match suite {
        Some(p) => load_suite(p)?,
        None => load_suite(Path::new(&trace.header.suite))?,
    };
    if !trace.header.backend.is_replayable() {
        return Err(CliError::Config(
            "traces from HTTP backends cannot be replayed".into(),
        ));
    }
    // surface script loading problems as configuration errors
    backend_for(&trace.header.backend, &suite).map_err(|e| CliError::Config(e.to_string()))?;
    match replay(&text, &suite).map_err(|e| CliError::Config(e.to_string()))? {
        ReplayOutcome::Match => Ok(format!(
            "{}: match ({} steps)\n",
            path.display(),
            trace.end.steps
        )),
        ReplayOutcome::Diverged {
            line,
            step,
            expected,
            actual,
        } => {
            let at = match step {
                Some(s) => format!("step {s}"),
                None if line == 0 => "header".to_string(),
                None => "end record".to_string(),
            };
            let clip = |s: &str| s.chars().take(200).collect::<String>();
            Err(CliError::Divergence(format!(
                "{}: first difference at line {} ({at})\n  expected: {}\n  actual:   {}",
                path.display(),
                line + 1,
                clip(&expected),
                clip(&actual)
            )))
        }
    }
}
