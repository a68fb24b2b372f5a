//! Run configuration: flags, optionally overlaid by a JSON file.

use std::path::{Path, PathBuf};

use latent_ui::grounder::GoalSlot;
use latent_ui::planner::ReasoningMethod;
use latent_ui::sim::EnvConfig;
use latent_ui::trace::BackendDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_HTTP_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub suite: PathBuf,
    pub method: ReasoningMethod,
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub http_timeout_secs: Option<u64>,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub goal_slot: GoalSlot,
    pub out: PathBuf,
    /// Empty runs every task.
    #[serde(default)]
    pub tasks: Vec<String>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "one")]
    pub parallel: usize,
}

fn one() -> usize {
    1
}

/// Recursively overlays `top` onto `base`; objects merge, anything else replaces.
pub fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn has_seed(doc: &Value, model: &str) -> bool {
    doc.pointer(&format!("/env/{model}/seed")).is_some()
}

impl RunConfig {
    /// `flags` is the configuration implied by command-line flags; values in
    /// the file at `file` take precedence.
    pub fn resolve(mut flags: Value, file: Option<&Path>) -> Result<Self, CliError> {
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let doc: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            overlay(&mut flags, doc);
        }
        for key in ["suite", "method", "out"] {
            if flags.get(key).is_none_or(Value::is_null) {
                return Err(CliError::Usage(format!(
                    "--{key} is required (flag or config file)"
                )));
            }
        }
        if flags.get("backend").is_none_or(Value::is_null) {
            return Err(CliError::Usage(
                "a backend is required: --oracle, --script PATH or --http-url URL with --http-model NAME".into(),
            ));
        }
        let config: RunConfig = serde_json::from_value(flags.clone())
            .map_err(|e| CliError::Config(format!("invalid run configuration: {e}")))?;
        config.validate(&flags)?;
        Ok(config)
    }

    fn validate(&self, doc: &Value) -> Result<(), CliError> {
        self.env
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let n = &self.env.noise;
        let noisy = [
            n.p_drop_element,
            n.p_strip_metadata,
            n.p_inject_background,
            n.p_stale_tree,
            n.p_mislabel_type,
        ]
        .iter()
        .any(|p| *p > 0.0);
        let f = &self.env.faults;
        let faulty = f.p_noop + f.p_wrong_element + f.p_wrong_text > 0.0;
        for (model, active) in [
            ("noise", noisy),
            ("faults", faulty),
            ("events", self.env.events.p_popup > 0.0),
        ] {
            if active && !has_seed(doc, model) {
                return Err(CliError::Config(format!(
                    "{model} probabilities are non-zero but no seed was given (use --seed)"
                )));
            }
        }
        if self.repeats == 0 || self.parallel == 0 {
            return Err(CliError::Config(
                "repeats and parallel must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Seeds for one episode: every stream shifted by the episode's index
    /// `task_index * repeats + repeat`, where `task_index` is the task's
    /// position in the full suite.
    pub fn env_for_episode(&self, task_index: usize, repeat: usize) -> EnvConfig {
        let mut env = self.env;
        let r = (task_index * self.repeats + repeat) as u64;
        env.noise.seed = env.noise.seed.wrapping_add(r);
        env.faults.seed = env.faults.seed.wrapping_add(r);
        env.events.seed = env.events.seed.wrapping_add(r);
        env
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "suite": "s.json",
            "method": "zero_shot_plus",
            "backend": {"kind": "oracle"},
            "out": "out",
        })
    }

    #[test]
    fn file_values_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"method": "react_minus", "env": {"faults": {"p_noop": 0.2, "seed": 4}}}"#,
        )
        .unwrap();
        let c = RunConfig::resolve(base(), Some(&path)).unwrap();
        assert_eq!(c.method, ReasoningMethod::ReactMinus);
        assert_eq!(c.env.faults.p_noop, 0.2);
        assert_eq!(c.env.faults.seed, 4);
    }

    #[test]
    fn probabilities_need_seeds() {
        let mut flags = base();
        flags["env"] = json!({"faults": {"p_noop": 0.2}});
        assert!(matches!(
            RunConfig::resolve(flags, None),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn backend_is_required() {
        let mut flags = base();
        flags.as_object_mut().unwrap().remove("backend");
        assert!(matches!(
            RunConfig::resolve(flags, None),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn episodes_shift_every_stream() {
        let mut flags = base();
        flags["env"] =
            json!({"noise": {"seed": 10}, "faults": {"seed": 20}, "events": {"seed": 30}});
        let c = RunConfig::resolve(flags, None).unwrap();
        let e = c.env_for_episode(0, 2);
        assert_eq!((e.noise.seed, e.faults.seed, e.events.seed), (12, 22, 32));
        let e = c.env_for_episode(3, 0);
        assert_eq!(e.noise.seed, 13);
    }
}
