mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_ui::eval::PermutationMode;
use latent_ui::grounder::GoalSlot;
use latent_ui::planner::ReasoningMethod;
use serde_json::{json, Value};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "latent-ui",
    version,
    about = "Run, score and replay UI-agent episodes on simulated devices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and write one trace per episode.
    Run(Box<RunArgs>),
    /// Score a directory of traces.
    Score {
        traces: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Second trace directory for paired significance tests.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[command(flatten)]
        perm: PermArgs,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a trace and check it reproduces byte for byte.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
    },
    /// Accuracy of constant predictors over the scored steps.
    Baselines {
        traces: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
    },
    /// Paired permutation tests between two runs.
    Stats {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[command(flatten)]
        perm: PermArgs,
    },
}

#[derive(Args)]
struct PermArgs {
    /// Force exact enumeration of sign flips.
    #[arg(long, conflicts_with = "monte_carlo")]
    exact: bool,
    /// Force Monte Carlo with this many flips.
    #[arg(long, value_name = "N")]
    monte_carlo: Option<usize>,
    #[arg(long, default_value_t = 0)]
    perm_seed: u64,
}

impl PermArgs {
    fn mode(&self) -> PermutationMode {
        match (self.exact, self.monte_carlo) {
            (true, _) => PermutationMode::Exact,
            (false, Some(samples)) => PermutationMode::MonteCarlo {
                samples,
                seed: self.perm_seed,
            },
            (false, None) => PermutationMode::Auto {
                seed: self.perm_seed,
            },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    suite: Option<PathBuf>,
    /// zero_shot_minus, zero_shot_plus, cot_sc_minus, cot_sc_plus, react_minus or react_plus.
    #[arg(long, value_parser = parse_method)]
    method: Option<ReasoningMethod>,
    /// Built-in rule-based oracle backend.
    #[arg(long, conflicts_with_all = ["script", "http_url"])]
    oracle: bool,
    /// Scripted backend file.
    #[arg(long, conflicts_with = "http_url")]
    script: Option<String>,
    /// Completion endpoint base URL; the key is read from LLM_API_KEY.
    #[arg(long, requires = "http_model")]
    http_url: Option<String>,
    #[arg(long)]
    http_model: Option<String>,
    #[arg(long)]
    http_timeout: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these task ids.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
    /// Fill the grounder's goal slot with the episode goal instead of the step command.
    #[arg(long)]
    episode_goal_slot: bool,
    /// Base seed: noise uses it, faults +1, events +2.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p_drop_element: Option<f64>,
    #[arg(long)]
    p_strip_metadata: Option<f64>,
    #[arg(long)]
    p_inject_background: Option<f64>,
    #[arg(long)]
    p_stale_tree: Option<f64>,
    #[arg(long)]
    p_mislabel_type: Option<f64>,
    #[arg(long)]
    p_noop: Option<f64>,
    #[arg(long)]
    p_wrong_element: Option<f64>,
    #[arg(long)]
    p_wrong_text: Option<f64>,
    #[arg(long)]
    p_popup: Option<f64>,
}

fn parse_method(s: &str) -> Result<ReasoningMethod, String> {
    s.parse::<ReasoningMethod>().map_err(|e| e.to_string())
}

impl RunArgs {
    /// The configuration document implied by the flags alone.
    fn to_value(&self) -> Value {
        let mut doc = json!({});
        let mut set = |key: &str, v: Value| {
            doc.as_object_mut().unwrap().insert(key.into(), v);
        };
        if let Some(s) = &self.suite {
            set("suite", json!(s));
        }
        if let Some(m) = self.method {
            set("method", json!(m));
        }
        if self.oracle {
            set("backend", json!({"kind": "oracle"}));
        } else if let Some(path) = &self.script {
            set("backend", json!({"kind": "scripted", "path": path}));
        } else if let (Some(url), Some(model)) = (&self.http_url, &self.http_model) {
            set(
                "backend",
                json!({"kind": "http", "base_url": url, "model": model}),
            );
        }
        if let Some(t) = self.http_timeout {
            set("http_timeout_secs", json!(t));
        }
        if let Some(o) = &self.out {
            set("out", json!(o));
        }
        if !self.tasks.is_empty() {
            set("tasks", json!(self.tasks));
        }
        if let Some(r) = self.repeats {
            set("repeats", json!(r));
        }
        if let Some(p) = self.parallel {
            set("parallel", json!(p));
        }
        if self.episode_goal_slot {
            set("goal_slot", json!(GoalSlot::EpisodeGoal));
        }

        let mut env = json!({"noise": {}, "faults": {}, "events": {}});
        let mut put = |model: &str, key: &str, v: Option<f64>| {
            if let Some(v) = v {
                env[model][key] = json!(v);
            }
        };
        put("noise", "p_drop_element", self.p_drop_element);
        put("noise", "p_strip_metadata", self.p_strip_metadata);
        put("noise", "p_inject_background", self.p_inject_background);
        put("noise", "p_stale_tree", self.p_stale_tree);
        put("noise", "p_mislabel_type", self.p_mislabel_type);
        put("faults", "p_noop", self.p_noop);
        put("faults", "p_wrong_element", self.p_wrong_element);
        put("faults", "p_wrong_text", self.p_wrong_text);
        put("events", "p_popup", self.p_popup);
        if let Some(seed) = self.seed {
            env["noise"]["seed"] = json!(seed);
            env["faults"]["seed"] = json!(seed.wrapping_add(1));
            env["events"]["seed"] = json!(seed.wrapping_add(2));
        }
        doc["env"] = env;
        doc
    }
}

fn execute(command: Command) -> Result<String, CliError> {
    match command {
        Command::Run(args) => {
            let config = RunConfig::resolve(args.to_value(), args.config.as_deref())?;
            commands::run(&config)
        }
        Command::Score {
            traces,
            suite,
            compare,
            perm,
            out,
        } => {
            let report =
                commands::score(&traces, suite.as_deref(), compare.as_deref(), perm.mode())?;
            if let Some(path) = out {
                std::fs::write(&path, &report).map_err(|e| {
                    CliError::Config(format!("cannot write {}: {e}", path.display()))
                })?;
            }
            Ok(report)
        }
        Command::Replay { trace, suite } => commands::replay_file(&trace, suite.as_deref()),
        Command::Baselines { traces, suite } => commands::baselines(&traces, suite.as_deref()),
        Command::Stats { a, b, suite, perm } => {
            commands::stats(&a, &b, suite.as_deref(), perm.mode())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
