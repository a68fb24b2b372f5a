//! One check per acceptance criterion. Each prints a single PASS or FAIL
//! line (run with `--nocapture` to see them) and fails the test on FAIL.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{noisy, random_walk, rendered_prompts, root, run, run_with, suite, task_index};
use latent_ui::agent::{replay, run_episode, AgentConfig, EpisodeSpec, ReplayOutcome};
use latent_ui::eval::{
    fuzzy_match, fuzzy_ratio, indel_distance, naive_baselines, paired_permutation_test,
    score_trace, summarize, BaselineStep, PermutationMode, StopOutcome,
};
use latent_ui::grounder::GoalSlot;
use latent_ui::llm::{
    CallPurpose, CompletionBackend, CompletionRequest, LlmError, ScriptRule, ScriptedBackend,
};
use latent_ui::oracle::PolicyOracle;
use latent_ui::planner::{majority_vote, ReasoningMethod, COT_SC_SAMPLES, COT_SC_TEMPERATURE};
use latent_ui::sim::{
    check_termination, is_sound, EnvConfig, Environment, Suite, TaskSpec, TerminationReason,
    REPEAT_LIMIT,
};
use latent_ui::trace::{BackendDescriptor, EpisodeTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "{} {criterion}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(pass, "{criterion}: {}", detail.as_ref());
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

#[test]
fn prompt_fidelity() {
    let start = Instant::now();
    let prompts = rendered_prompts();
    let mut mismatched = Vec::new();
    for (name, text) in &prompts {
        let golden = std::fs::read_to_string(root().join(format!("tests/golden/{name}.txt")))
            .unwrap_or_default();
        if golden != *text {
            mismatched.push(*name);
        }
    }
    let elapsed = start.elapsed();
    let pass = prompts.len() == 13 && mismatched.is_empty() && within(elapsed, 1.0);
    verdict(
        "prompt fidelity",
        pass,
        format!(
            "{} prompts, mismatched {mismatched:?}, {:.3}s (< 1s)",
            prompts.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn chain_order() {
    let suite = suite();
    let trace = run(
        &suite,
        task_index(&suite, "settings_roaming"),
        ReasoningMethod::ZeroShotPlus,
        EnvConfig::default(),
    );
    use CallPurpose::*;
    let mut bad = Vec::new();
    for s in &trace.steps {
        let mut expected = if s.step == 0 {
            vec![]
        } else {
            vec![PreviousAction]
        };
        expected.extend([ScreenSummary, Progression, Mistakes, Planner, Completion]);
        if !s.stopped {
            expected.push(Grounder);
        }
        let actual: Vec<CallPurpose> = s.calls.iter().map(|c| c.purpose).collect();
        if actual != expected {
            bad.push((s.step, actual));
        }
    }
    let pass = trace.steps.len() == 5 && bad.is_empty();
    verdict(
        "chain order",
        pass,
        format!("{} steps, out-of-order steps {bad:?}", trace.steps.len()),
    );
}

fn scripted(goal: &str, planner: &[&str]) -> ScriptedBackend {
    ScriptedBackend::new(vec![
        ScriptRule::prefix("Here are some examples of how requests", &[goal]),
        ScriptRule::prefix("Given a mockup", &[r#"{"action_type": "wait"}"#]),
        ScriptRule::contains("Here are the actions you have taken", planner),
    ])
    .unwrap()
}

fn run_task(
    suite: &Suite,
    task: TaskSpec,
    method: ReasoningMethod,
    backend: Arc<dyn CompletionBackend>,
) -> EpisodeTrace {
    let spec = EpisodeSpec {
        world: suite.world.clone(),
        task,
        env: EnvConfig::default(),
        suite_path: suite.path.display().to_string(),
        backend: BackendDescriptor::Oracle,
    };
    let cfg = AgentConfig {
        method,
        goal_slot: GoalSlot::StepCommand,
    };
    run_episode(&spec, cfg, backend).unwrap()
}

#[test]
fn termination() {
    let suite = suite();
    let mut task = suite.tasks[task_index(&suite, "settings_dark_theme")].clone();
    task.max_steps = 6;

    let repeated = run_task(
        &suite,
        task.clone(),
        ReasoningMethod::ZeroShotMinus,
        Arc::new(scripted(&task.goal, &["scroll down"])),
    );
    let repeat_ok = repeated.end.termination == TerminationReason::RepeatedActions
        && repeated.end.steps == REPEAT_LIMIT;

    let alternating = scripted(&task.goal, &["wait a moment", "wait a second"]);
    let capped = run_task(
        &suite,
        task.clone(),
        ReasoningMethod::ZeroShotMinus,
        Arc::new(alternating),
    );
    let cap_ok =
        capped.end.termination == TerminationReason::MaxSteps && capped.end.steps == task.max_steps;

    // random sequences over a tiny alphabet: fires exactly when the last three agree
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut false_fires = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..10);
        let cmds: Vec<String> = (0..len)
            .map(|_| ["a", "b", "c"][rng.gen_range(0..3)].to_string())
            .collect();
        let expected = len >= 3 && cmds[len - 1] == cmds[len - 2] && cmds[len - 2] == cmds[len - 3];
        let fired =
            check_termination(&cmds, len, 100, false) == Some(TerminationReason::RepeatedActions);
        if fired != expected {
            false_fires += 1;
        }
    }
    let pass = repeat_ok && cap_ok && false_fires == 0;
    verdict(
        "termination",
        pass,
        format!(
            "repeat rule {:?} after {} steps; max_steps rule {:?} after {} steps; {false_fires} wrong fires in 10000 random sequences",
            repeated.end.termination, repeated.end.steps, capped.end.termination, capped.end.steps
        ),
    );
}

#[test]
fn cot_sc_voting() {
    let candidates = ["open Clock", "tap \"Alarm\"", "scroll down"];
    let mut disagreements = 0;
    let mut checked = 0;
    for code in 0..3usize.pow(8) {
        let idx: Vec<usize> = (0..8).map(|i| code / 3usize.pow(i) % 3).collect();
        let answers: Vec<String> = idx.iter().map(|&i| candidates[i].to_string()).collect();
        // modal element, earliest first occurrence among ties
        let mut counts = [0usize; 3];
        idx.iter().for_each(|&i| counts[i] += 1);
        let top = *counts.iter().max().unwrap();
        let winner_pos = idx.iter().position(|&i| counts[i] == top).unwrap();
        let vote = majority_vote(&answers).unwrap();
        if vote.winner_index != winner_pos
            || vote.winner != answers[winner_pos]
            || vote.votes != top
        {
            disagreements += 1;
        }
        checked += 1;
    }

    let suite = suite();
    let trace = run(
        &suite,
        task_index(&suite, "clock_alarm_6am"),
        ReasoningMethod::CotScPlus,
        EnvConfig::default(),
    );
    let planner_calls: Vec<_> = trace
        .steps
        .iter()
        .flat_map(|s| &s.calls)
        .filter(|c| c.purpose == CallPurpose::Planner)
        .collect();
    let recorded = !planner_calls.is_empty()
        && planner_calls.iter().all(|c| {
            c.n == COT_SC_SAMPLES && c.temperature == COT_SC_TEMPERATURE && c.completions.len() == 8
        })
        && trace
            .steps
            .iter()
            .all(|s| s.planner.vote.is_some() && s.planner.parsed_samples.len() == 8);
    let pass = disagreements == 0 && COT_SC_SAMPLES == 8 && COT_SC_TEMPERATURE == 0.5 && recorded;
    verdict(
        "CoT-SC voting",
        pass,
        format!(
            "{disagreements} disagreements over {checked} sample sequences; {} planner calls recorded with n=8, temperature 0.5: {recorded}",
            planner_calls.len()
        ),
    );
}

#[test]
fn react_truncation() {
    let suite = suite();
    let task = task_index(&suite, "calendar_task_exercise");
    let mut worst = 0;
    let mut steps = Vec::new();
    for method in [ReasoningMethod::ReactMinus, ReasoningMethod::ReactPlus] {
        let trace = run(&suite, task, method, EnvConfig::default());
        steps.push(trace.steps.len());
        for c in trace
            .steps
            .iter()
            .flat_map(|s| &s.calls)
            .filter(|c| c.purpose == CallPurpose::Planner)
        {
            let blocks = c
                .prompt
                .lines()
                .filter(|l| {
                    l.strip_prefix("Observation ").is_some_and(|r| {
                        r.ends_with(':') && r[..r.len() - 1].parse::<usize>().is_ok()
                    })
                })
                .count();
            worst = worst.max(blocks);
        }
    }
    let pass = steps.iter().all(|&n| n >= 6) && worst <= 2;
    verdict(
        "ReAct truncation",
        pass,
        format!("episode lengths {steps:?}; at most {worst} observation blocks per prompt"),
    );
}

// Insert/delete distance by memoised recursion on suffixes.
fn oracle_indel(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let mut d = 1 + oracle_indel(&a[1..], b, memo).min(oracle_indel(a, &b[1..], memo));
    if a[0] == b[0] {
        d = d.min(oracle_indel(&a[1..], &b[1..], memo));
    }
    memo.insert((a.len(), b.len()), d);
    d
}

const MATCH_FIXTURE: [(&str, &str, bool); 20] = [
    ("open Settings", "open Settings", true),
    ("open Settings", "open settings", true),
    ("abcde", "abcdf", false),
    ("abcdef", "abcdeg", true),
    ("tap Display", "tap \"Display\"", true),
    (
        "the previous action was to turn on the dark theme",
        "the previous action was do not turn on the dark theme",
        false,
    ),
    ("do not disturb", "do not disturb", false),
    ("No action was performed.", "No action was performed.", true),
    ("open Clock", "open Calendar", false),
    ("", "", true),
    ("abc", "", false),
    ("  open Settings ", "open Settings", true),
    ("scroll down", "scroll up", false),
    ("tap \"Dark theme\"", "tap \"Dark theme\" toggle", true),
    ("Mistakes: none", "Do not know", false),
    ("I do not know", "I do not know", false),
    ("navigate back", "navigate back.", true),
    ("open app drawer", "open the app drawer", true),
    ("abcdefghij", "abcdefghXY", false),
    ("abcdefghijk", "abcdefghiXY", true),
];

#[test]
fn fuzzy_criterion() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet: Vec<char> = "ab c".chars().collect();
    let mut distance_mismatches = 0;
    let mut ratio_mismatches = 0;
    for _ in 0..1000 {
        let mut word = || -> String {
            (0..rng.gen_range(0..=12))
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect()
        };
        let (a, b) = (word(), word());
        let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let d = oracle_indel(&ca, &cb, &mut HashMap::new());
        let total = ca.len() + cb.len();
        let ratio = if total == 0 {
            1.0
        } else {
            1.0 - d as f64 / total as f64
        };
        distance_mismatches += usize::from(indel_distance(&a, &b) != d);
        ratio_mismatches += usize::from(fuzzy_ratio(&a, &b) != ratio);
    }
    let rule_mismatches: Vec<_> = MATCH_FIXTURE
        .iter()
        .filter(|(r, c, m)| fuzzy_match(r, c) != *m)
        .collect();
    let elapsed = start.elapsed();
    let pass = distance_mismatches == 0
        && ratio_mismatches == 0
        && rule_mismatches.is_empty()
        && within(elapsed, 5.0);
    verdict(
        "fuzzy criterion",
        pass,
        format!(
            "1000 pairs: {distance_mismatches} distance and {ratio_mismatches} ratio mismatches; rule fixture mismatches {rule_mismatches:?}; {:.3}s (< 5s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn naive_baselines_fixture() {
    // 500 steps: 35 complete (7.0%), 71 non-matching (14.2%), 130 with
    // outstanding mistakes (25.94% of 500 is 129.7, so the nearest count)
    let steps: Vec<BaselineStep> = (0..500)
        .map(|i| BaselineStep {
            complete: i < 35,
            action_matches: Some(!(100..171).contains(&i)),
            mistakes_outstanding: (200..330).contains(&i),
        })
        .collect();
    let b = naive_baselines(&steps).unwrap();
    let targets = [
        ("completion", b.completion, 0.930),
        ("action", b.action, 0.858),
        ("mistakes", b.mistakes, 0.7406),
    ];
    let parts: Vec<String> = targets
        .iter()
        .map(|(name, got, want)| {
            let ok = (got - want).abs() <= 0.0005;
            format!(
                "{name} {got:.4} vs {want} {}",
                if ok { "ok" } else { "out of tolerance" }
            )
        })
        .collect();
    let pass = targets
        .iter()
        .all(|(_, got, want)| (got - want).abs() <= 0.0005);
    verdict(
        "naive baselines",
        pass,
        format!(
            "{} (tolerance 0.0005; no integer count out of 500 lands within it for 0.7406); reference figures 92.8%/85%/74.06%",
            parts.join(", ")
        ),
    );
}

// Fraction of the 2^n sign assignments whose |sum| reaches the observed one.
fn enumerate_p(diffs: &[i64]) -> f64 {
    let n = diffs.len();
    let observed = diffs.iter().sum::<i64>().abs();
    let hits = (0u64..1 << n)
        .filter(|mask| {
            let s: i64 = diffs
                .iter()
                .enumerate()
                .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                .sum();
            s.abs() >= observed
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(i64, i64)> {
    (0..n)
        .map(|_| (rng.gen_range(0..4), rng.gen_range(0..4)))
        .collect()
}

fn as_f64(pairs: &[(i64, i64)]) -> Vec<(f64, f64)> {
    pairs.iter().map(|&(a, b)| (a as f64, b as f64)).collect()
}

#[test]
fn permutation_test() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut exact_mismatches = 0;
    let mut fixtures = 0;
    for n in 1..=12 {
        for _ in 0..5 {
            let pairs = random_pairs(&mut rng, n);
            let diffs: Vec<i64> = pairs.iter().map(|(a, b)| a - b).collect();
            let p = paired_permutation_test(&as_f64(&pairs), PermutationMode::Exact);
            exact_mismatches += usize::from(p != enumerate_p(&diffs));
            fixtures += 1;
        }
    }
    let ones = paired_permutation_test(&[(1.0, 0.0); 3], PermutationMode::Exact);

    // draw until the p-value is far from both ends, so the comparison means something
    let (pairs, exact) = loop {
        let pairs = random_pairs(&mut rng, 15);
        let diffs: Vec<i64> = pairs.iter().map(|(a, b)| a - b).collect();
        let p = enumerate_p(&diffs);
        if (0.05..=0.5).contains(&p) {
            break (pairs, p);
        }
    };
    let mc = paired_permutation_test(
        &as_f64(&pairs),
        PermutationMode::MonteCarlo {
            samples: 100_000,
            seed: 3,
        },
    );
    let elapsed = start.elapsed();
    let pass = exact_mismatches == 0
        && ones == 0.25
        && (mc - exact).abs() <= 0.01
        && within(elapsed, 10.0);
    verdict(
        "permutation test",
        pass,
        format!(
            "{exact_mismatches}/{fixtures} exact mismatches for n <= 12; (1,1,1) -> {ones}; n=15 Monte Carlo {mc:.4} vs exact {exact:.4}; {:.3}s (< 10s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn simulator_soundness() {
    let suite = suite();
    let mut draws = 0;
    let mut unsound = 0;
    let mut seed = 0;
    while draws < 10_000 {
        let task = &suite.tasks[seed as usize % suite.tasks.len()];
        let mut env = Environment::reset(suite.world.clone(), task, noisy(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = (env.render_truth().tree, env.background_pool());
        unsound += usize::from(!is_sound(env.observe(), &prev.0, &prev.1));
        draws += 1;
        random_walk(&mut env, &mut rng, 20, |e| {
            if e.observation_is_stale() {
                // repeats an earlier observation, which is judged against its own truth
                unsound += usize::from(!is_sound(e.observe(), &prev.0, &prev.1));
            } else {
                let now = (e.render_truth().tree, e.background_pool());
                unsound += usize::from(!is_sound(e.observe(), &now.0, &now.1));
                prev = now;
            }
            draws += 1;
        });
        seed += 1;
    }

    let mut verbatim_failures = 0;
    for (i, task) in suite.tasks.iter().enumerate() {
        let mut env = Environment::reset(suite.world.clone(), task, EnvConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        verbatim_failures += usize::from(*env.observe() != env.render_truth().tree);
        random_walk(&mut env, &mut rng, 30, |e| {
            verbatim_failures += usize::from(*e.observe() != e.render_truth().tree)
        });
    }
    let pass = unsound == 0 && verbatim_failures == 0;
    verdict(
        "simulator soundness",
        pass,
        format!("{unsound} unsound of {draws} noisy observations; {verbatim_failures} zero-noise observations differ from truth"),
    );
}

#[test]
fn end_to_end_contrast() {
    let start = Instant::now();
    let suite = suite();
    let env_for = |seed: u64, task: usize| {
        let mut env = EnvConfig::default();
        env.faults.p_noop = 0.2;
        env.faults.seed = seed * 100 + task as u64;
        env
    };
    let mut scored = Vec::new();
    let mut nondeterministic = 0;
    let mut replay_failures = 0;
    for seed in 0..20 {
        for task in 0..suite.tasks.len() {
            for method in [
                ReasoningMethod::ZeroShotMinus,
                ReasoningMethod::ZeroShotPlus,
            ] {
                let trace = run(&suite, task, method, env_for(seed, task));
                let text = trace.to_jsonl();
                if seed < 2 {
                    nondeterministic += usize::from(
                        run(&suite, task, method, env_for(seed, task)).to_jsonl() != text,
                    );
                    replay_failures +=
                        usize::from(replay(&text, &suite).unwrap() != ReplayOutcome::Match);
                }
                scored.push(score_trace(&trace, &suite).unwrap());
            }
        }
    }
    let rows = summarize(&scored);
    let strict = |m| {
        rows.iter()
            .find(|r| r.method == m)
            .unwrap()
            .strict_stop_success
    };
    let (plus, minus) = (
        strict(ReasoningMethod::ZeroShotPlus),
        strict(ReasoningMethod::ZeroShotMinus),
    );
    let elapsed = start.elapsed();
    let pass = suite.tasks.len() >= 10
        && plus > minus
        && nondeterministic == 0
        && replay_failures == 0
        && within(elapsed, 120.0);
    verdict(
        "end-to-end contrast",
        pass,
        format!(
            "{} tasks x 20 seeds at p_noop 0.2: strict-stop success zero-shot+ {plus:.3} vs zero-shot- {minus:.3}; {nondeterministic} non-deterministic reruns, {replay_failures} replay failures; {:.1}s (< 120s)",
            suite.tasks.len(),
            elapsed.as_secs_f64()
        ),
    );
}

/// The rule oracle with selected planner answers replaced. Overridden
/// commands containing "wait a" are grounded to a wait action.
struct Overridden {
    oracle: PolicyOracle,
    planner: BTreeMap<usize, &'static str>,
    default_from: Option<(usize, [&'static str; 2])>,
    planner_calls: Mutex<usize>,
}

impl CompletionBackend for Overridden {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let p = &request.prompt;
        if p.contains("Here are the actions you have taken") {
            let mut calls = self.planner_calls.lock().unwrap();
            let step = *calls;
            *calls += 1;
            let forced = self
                .planner
                .get(&step)
                .copied()
                .or(match self.default_from {
                    Some((from, cycle)) if step >= from => Some(cycle[step % 2]),
                    _ => None,
                });
            if let Some(answer) = forced {
                return Ok(vec![answer.to_string(); request.n as usize]);
            }
        }
        if p.starts_with("Given a mockup") && p.contains("wait a") {
            return Ok(vec![
                r#"{"action_type": "wait"}"#.to_string();
                request.n as usize
            ]);
        }
        self.oracle.complete(request)
    }
}

#[test]
fn stop_outcome_classification() {
    let suite = suite();
    let task = task_index(&suite, "settings_dark_theme");
    let episode = |planner: &[(usize, &'static str)], default_from| {
        let backend = Overridden {
            oracle: PolicyOracle::from_suite(&suite),
            planner: planner.iter().copied().collect(),
            default_from,
            planner_calls: Mutex::new(0),
        };
        let trace = run_with(
            &suite,
            task,
            ReasoningMethod::ZeroShotMinus,
            EnvConfig::default(),
            Arc::new(backend),
        );
        let outcome = score_trace(&trace, &suite).unwrap().metrics.stop_outcome;
        (
            outcome,
            trace.stop_step(),
            trace.end.truth.first_complete_step(),
        )
    };
    let cases = [
        (
            StopOutcome::Premature,
            episode(&[(1, "You should be done.")], None),
        ),
        (StopOutcome::RightTime, episode(&[], None)),
        (
            StopOutcome::ExtraSteps,
            episode(&[(3, "wait a moment"), (4, "You should be done.")], None),
        ),
        (
            StopOutcome::DidNotStop,
            episode(&[], Some((3, ["wait a moment", "wait a second"]))),
        ),
    ];
    let pass = cases.iter().all(|(want, (got, _, _))| want == got);
    let detail: Vec<String> = cases
        .iter()
        .map(|(want, (got, stop, first))| {
            format!(
                "{} -> {} (stop {stop:?}, first complete {first:?})",
                want.as_str(),
                got.as_str()
            )
        })
        .collect();
    verdict("stop-outcome classification", pass, detail.join("; "));
}
