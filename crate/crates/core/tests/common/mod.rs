//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use latent_ui::agent::{run_episode, AgentConfig, EpisodeSpec};
use latent_ui::grounder::{build_grounder_prompt, GoalSlot, GroundedAction};
use latent_ui::latent::{
    completion_prompt, mistakes_prompt, previous_action_prompt, progression_prompt,
    screen_summary_prompt,
};
use latent_ui::llm::CompletionBackend;
use latent_ui::oracle::PolicyOracle;
use latent_ui::planner::{normalize_goal_prompt, Planner, PlannerInput, ReasoningMethod};
use latent_ui::prompts::EXEMPLAR_TREES;
use latent_ui::screen::{observe_tree, parse_tree_str, Observation, ScreenDims};
use latent_ui::sim::{EnvConfig, Environment, NoiseModel, Suite};
use latent_ui::trace::{BackendDescriptor, EpisodeTrace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn suite() -> Suite {
    Suite::load(root().join("../../fixtures/desk/suite.json")).unwrap()
}

pub fn task_index(suite: &Suite, id: &str) -> usize {
    suite
        .tasks
        .iter()
        .position(|t| t.id == id)
        .unwrap_or_else(|| panic!("no task {id}"))
}

pub fn run_with(
    suite: &Suite,
    task: usize,
    method: ReasoningMethod,
    env: EnvConfig,
    backend: Arc<dyn CompletionBackend>,
) -> EpisodeTrace {
    let spec = EpisodeSpec {
        world: suite.world.clone(),
        task: suite.tasks[task].clone(),
        env,
        suite_path: suite.path.display().to_string(),
        backend: BackendDescriptor::Oracle,
    };
    let cfg = AgentConfig {
        method,
        goal_slot: GoalSlot::StepCommand,
    };
    run_episode(&spec, cfg, backend).unwrap()
}

pub fn run(suite: &Suite, task: usize, method: ReasoningMethod, env: EnvConfig) -> EpisodeTrace {
    run_with(
        suite,
        task,
        method,
        env,
        Arc::new(PolicyOracle::from_suite(suite)),
    )
}

pub fn noop_env(seed: u64) -> EnvConfig {
    let mut env = EnvConfig::default();
    env.faults.p_noop = 0.2;
    env.faults.seed = seed;
    env
}

/// Every noise, fault and event model switched on.
pub fn noisy(seed: u64) -> EnvConfig {
    let mut cfg = EnvConfig {
        noise: NoiseModel {
            p_drop_element: 0.2,
            p_strip_metadata: 0.2,
            p_inject_background: 0.5,
            p_stale_tree: 0.2,
            p_mislabel_type: 0.2,
            seed,
        },
        ..EnvConfig::default()
    };
    cfg.faults.p_noop = 0.2;
    cfg.faults.p_wrong_element = 0.2;
    cfg.faults.seed = seed + 1;
    cfg.events.p_popup = 0.1;
    cfg.events.seed = seed + 2;
    cfg
}

pub fn random_walk(
    env: &mut Environment,
    rng: &mut ChaCha8Rng,
    steps: usize,
    mut visit: impl FnMut(&Environment),
) {
    let dims = env.dims();
    for _ in 0..steps {
        let action = match rng.gen_range(0..6) {
            0 => GroundedAction::NavigateBack,
            1 => GroundedAction::OpenApp {
                app_name: ["Settings", "Clock", "Simple Calendar Pro"][rng.gen_range(0..3)].into(),
            },
            _ => GroundedAction::Click {
                x: rng.gen_range(0..dims.width),
                y: rng.gen_range(0..dims.height),
            },
        };
        env.step("act", Some(&action), None).unwrap();
        visit(env);
    }
}

pub fn exemplar(i: usize) -> Observation {
    observe_tree(
        &parse_tree_str(EXEMPLAR_TREES[i]).unwrap(),
        ScreenDims::default(),
    )
}

pub const GOAL: &str = "Turn on the dark theme.";

/// Every prompt rendered on one fixed context, keyed by golden file stem.
pub fn rendered_prompts() -> Vec<(&'static str, String)> {
    let prev = exemplar(1);
    let curr = exemplar(0);
    let history = vec!["open Settings".to_string(), "tap \"Display\"".to_string()];
    let progression = "opened the Settings app and then opened the display settings.";
    let mistakes = "No mistakes have been made.";
    let summary = "This screen shows the display settings.";

    let mut out = vec![
        (
            "normalize_goal",
            normalize_goal_prompt("turn on dark theme pls"),
        ),
        (
            "previous_action",
            previous_action_prompt("tap \"Display\"", &prev.description, &curr.description),
        ),
        (
            "screen_summary",
            screen_summary_prompt(&curr.description, Some("tap \"Display\"")),
        ),
        (
            "progression",
            progression_prompt(&history, summary, &curr.description),
        ),
        (
            "mistakes",
            mistakes_prompt(GOAL, progression, &curr.description),
        ),
        (
            "completion",
            completion_prompt(GOAL, &history, summary, "tap \"Dark theme\""),
        ),
        (
            "grounder",
            build_grounder_prompt(&curr.view, "tap \"Dark theme\""),
        ),
    ];
    for method in ReasoningMethod::ALL {
        let input = PlannerInput {
            cleaned_goal: GOAL,
            screen: &curr.description,
            commanded_history: &history,
            progression: Some(progression),
            mistakes: Some(mistakes),
        };
        out.push((
            method.as_str(),
            Planner::new(method).prompt(&input).unwrap(),
        ));
    }
    out
}
