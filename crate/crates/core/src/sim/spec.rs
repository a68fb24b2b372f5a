//! App and task descriptions loaded from fixture files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, SimError};
use crate::grounder::Direction;
use crate::oracle::OracleTask;
use crate::screen::Bounds;

/// Package and screen id of the built-in launcher.
pub const LAUNCHER_APP: &str = "home";
pub const LAUNCHER_PACKAGE: &str = "com.android.launcher3";
pub const DEFAULT_MAX_STEPS: usize = 15;
const DEFAULT_CONTAINER_CLASS: &str = "android.widget.FrameLayout";

/// Child placement for nodes without explicit bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Column,
    Row,
}

/// A screen element template. Text fields may reference variables as
/// `{name}`; `show_if` and `checked_var` bind visibility and check state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTemplate {
    #[serde(rename = "class", default = "default_class")]
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default = "yes")]
    pub visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub show_if: Option<String>,
    /// Transition key; defaults to the node's label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeTemplate>,
}

fn default_class() -> String {
    DEFAULT_CONTAINER_CLASS.to_string()
}

fn yes() -> bool {
    true
}

impl NodeTemplate {
    pub fn new(class_name: impl Into<String>) -> Self {
        Self {
            class_name: class_name.into(),
            package: None,
            text: None,
            content_desc: None,
            hint: None,
            bounds: None,
            visible: true,
            checked: None,
            checked_var: None,
            show_if: None,
            key: None,
            layout: Layout::Column,
            children: Vec::new(),
        }
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a NodeTemplate>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }

    pub fn preorder(&self) -> Vec<&NodeTemplate> {
        let mut out = Vec::new();
        self.walk(&mut out);
        out
    }
}

/// One screen of an app. `background` lists elements that may leak into
/// observations from behind the active window; they need explicit bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub root: NodeTemplate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub background: Vec<NodeTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionPattern {
    Click(String),
    Type(String),
    Scroll(Direction),
    Back,
    Enter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Set {
        var: String,
        value: String,
    },
    Toggle(String),
    /// Stores the typed text.
    Input(String),
    Copy {
        to: String,
        from: String,
    },
}

/// `screen` may be `*` to match every screen of the app. The first matching
/// transition in file order wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub screen: String,
    pub on: ActionPattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    /// Name shown on the launcher and accepted by `open_app`.
    pub display_name: String,
    pub package: String,
    pub start: String,
    #[serde(default)]
    pub vars: BTreeMap<String, String>,
    pub screens: BTreeMap<String, ScreenSpec>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
}

impl AppSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(format!("app {}: {m}", self.name)));
        if self.name == LAUNCHER_APP {
            return err(format!("the name {LAUNCHER_APP:?} is reserved"));
        }
        if !self.screens.contains_key(&self.start) {
            return err(format!("start screen {:?} does not exist", self.start));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.screen != "*" && !self.screens.contains_key(&t.screen) {
                return err(format!(
                    "transition {i} names unknown screen {:?}",
                    t.screen
                ));
            }
            if let Some(to) = &t.to {
                if !self.screens.contains_key(to) {
                    return err(format!("transition {i} targets unknown screen {to:?}"));
                }
            }
        }
        for (id, screen) in &self.screens {
            for (j, b) in screen.background.iter().enumerate() {
                if b.preorder().iter().any(|n| n.bounds.is_none()) {
                    return err(format!(
                        "screen {id}: background element {j} needs explicit bounds"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Transitions applicable on `screen`, in priority order.
    pub fn transitions_for<'a>(
        &'a self,
        screen: &'a str,
    ) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions
            .iter()
            .filter(move |t| t.screen == screen || t.screen == "*")
    }
}

/// Boolean expression over the device state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Current screen, written `app/screen`.
    Screen(String),
    /// Screen visited at any point so far.
    Visited(String),
    VarEq(String, String),
    VarTrue(String),
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

/// The device state a predicate sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub screen: String,
    pub vars: BTreeMap<String, String>,
    pub visited: BTreeSet<String>,
    #[serde(default)]
    pub popup: bool,
}

pub fn truthy(value: &str) -> bool {
    !matches!(
        value.trim().to_ascii_lowercase().as_str(),
        "" | "false" | "0" | "off" | "no"
    )
}

impl Predicate {
    pub fn eval(&self, s: &DeviceSnapshot) -> bool {
        match self {
            Predicate::Screen(id) => s.screen == *id,
            Predicate::Visited(id) => s.visited.contains(id),
            Predicate::VarEq(name, value) => s.vars.get(name).is_some_and(|v| v == value),
            Predicate::VarTrue(name) => s.vars.get(name).is_some_and(|v| truthy(v)),
            Predicate::All(ps) => ps.iter().all(|p| p.eval(s)),
            Predicate::Any(ps) => ps.iter().any(|p| p.eval(s)),
            Predicate::Not(p) => !p.eval(s),
        }
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        out.push(self);
        match self {
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().for_each(|p| p.walk(out)),
            Predicate::Not(p) => p.walk(out),
            _ => {}
        }
    }

    /// Screen ids referenced anywhere in the expression.
    pub fn screens(&self) -> Vec<&str> {
        let mut nodes = Vec::new();
        self.walk(&mut nodes);
        nodes
            .into_iter()
            .filter_map(|p| match p {
                Predicate::Screen(id) | Predicate::Visited(id) => Some(id.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// When a partial-completion question is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionWhen {
    /// Satisfied at any observed state.
    #[default]
    Ever,
    /// Satisfied at the final state.
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialQuestion {
    pub text: String,
    pub predicate: Predicate,
    #[serde(default)]
    pub when: QuestionWhen,
}

/// Optional reference texts for scoring the free-text aspects, keyed by
/// screen id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceTexts {
    #[serde(default)]
    pub screen_summary: BTreeMap<String, String>,
    #[serde(default)]
    pub progression: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub goal: String,
    pub app: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub complete_when: Predicate,
    pub questions: Vec<PartialQuestion>,
    /// Screens on a completion-satisfying path. Empty means every screen.
    #[serde(default)]
    pub path_screens: Vec<String>,
    /// Variable overrides applied at reset.
    #[serde(default)]
    pub init: BTreeMap<String, String>,
    #[serde(default)]
    pub references: ReferenceTexts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleTask>,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(format!("task {}: {m}", self.id)));
        if self.max_steps < 1 {
            return err("max_steps must be at least 1".into());
        }
        if !(1..=7).contains(&self.questions.len()) {
            return err(format!(
                "needs 1 to 7 questions, has {}",
                self.questions.len()
            ));
        }
        Ok(())
    }

    pub fn on_path(&self, screen: &str) -> bool {
        self.path_screens.is_empty() || self.path_screens.iter().any(|s| s == screen)
    }
}

/// Every app plus the launcher, with screen ids qualified as `app/screen`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub apps: Vec<AppSpec>,
    pub launcher: AppSpec,
}

impl World {
    pub fn new(apps: Vec<AppSpec>) -> Result<Self, SimError> {
        let mut seen = BTreeSet::new();
        for app in &apps {
            app.validate()?;
            let names: BTreeSet<String> = [&app.name, &app.display_name]
                .iter()
                .map(|n| n.to_ascii_lowercase())
                .collect();
            if names.iter().any(|n| seen.contains(n)) {
                return Err(SimError::Config(format!(
                    "duplicate app name {:?}",
                    app.name
                )));
            }
            seen.extend(names);
        }
        let launcher = super::render::launcher_app(&apps);
        Ok(Self { apps, launcher })
    }

    pub fn app(&self, name: &str) -> Option<&AppSpec> {
        if name == LAUNCHER_APP {
            return Some(&self.launcher);
        }
        self.apps.iter().find(|a| a.name == name)
    }

    /// Resolves an `open_app` name against app and display names, ignoring case.
    pub fn app_by_user_name(&self, name: &str) -> Option<&AppSpec> {
        let n = name.trim().to_ascii_lowercase();
        self.apps
            .iter()
            .find(|a| a.display_name.to_ascii_lowercase() == n || a.name.to_ascii_lowercase() == n)
    }

    pub fn screen(&self, qualified: &str) -> Option<&ScreenSpec> {
        let (app, screen) = qualified.split_once('/')?;
        self.app(app)?.screens.get(screen)
    }

    /// Initial values of every app variable.
    pub fn initial_vars(&self) -> BTreeMap<String, String> {
        self.apps.iter().flat_map(|a| a.vars.clone()).collect()
    }

    pub fn validate_task(&self, task: &TaskSpec) -> Result<(), SimError> {
        task.validate()?;
        if self.app(&task.app).is_none() {
            return Err(SimError::Config(format!(
                "task {} references unknown app {:?}",
                task.id, task.app
            )));
        }
        let mut screens: Vec<&str> = task.complete_when.screens();
        screens.extend(task.questions.iter().flat_map(|q| q.predicate.screens()));
        screens.extend(task.path_screens.iter().map(String::as_str));
        for s in screens {
            if self.screen(s).is_none() {
                return Err(SimError::Config(format!(
                    "task {} references unknown screen {s:?}",
                    task.id
                )));
            }
        }
        Ok(())
    }
}

/// A set of apps and tasks loaded from one suite file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub name: String,
    /// App file paths, relative to the suite file.
    pub apps: Vec<PathBuf>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<crate::oracle::OracleGlobal>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub path: PathBuf,
    pub world: std::sync::Arc<World>,
    pub tasks: Vec<TaskSpec>,
    pub oracle: crate::oracle::OracleGlobal,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        SimError::Parse(ParseError::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

impl Suite {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let file: SuiteFile = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let apps = file
            .apps
            .iter()
            .map(|p| read_json::<AppSpec>(&dir.join(p)))
            .collect::<Result<Vec<_>, _>>()?;
        let world = World::new(apps)?;
        let mut ids = BTreeSet::new();
        for task in &file.tasks {
            world.validate_task(task)?;
            if !ids.insert(task.id.as_str()) {
                return Err(SimError::Config(format!("duplicate task id {:?}", task.id)));
            }
        }
        Ok(Self {
            name: file.name,
            path: path.to_path_buf(),
            world: std::sync::Arc::new(world),
            tasks: file.tasks,
            oracle: file.oracle.unwrap_or_default(),
        })
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn snapshot() -> DeviceSnapshot {
        DeviceSnapshot {
            screen: "clock/alarm".into(),
            vars: [
                ("alarm".to_string(), "6:00 AM".to_string()),
                ("on".to_string(), "true".to_string()),
            ]
            .into_iter()
            .collect(),
            visited: ["clock/alarm".to_string(), "home/main".to_string()]
                .into_iter()
                .collect(),
            popup: false,
        }
    }

    #[test]
    fn predicates_parse_and_evaluate() {
        let p: Predicate = serde_json::from_value(json!({"all": [
            {"screen": "clock/alarm"},
            {"var_eq": ["alarm", "6:00 AM"]},
            {"not": {"visited": "clock/timer"}},
            {"any": [{"var_true": "missing"}, {"var_true": "on"}]}
        ]}))
        .unwrap();
        assert!(p.eval(&snapshot()));
        let q: Predicate = serde_json::from_value(json!({"var_true": "alarm_off"})).unwrap();
        assert!(!q.eval(&snapshot()));
        assert_eq!(p.screens(), vec!["clock/alarm", "clock/timer"]);
    }

    #[test]
    fn truthiness() {
        for v in ["true", "1", "on", "6:00 AM"] {
            assert!(truthy(v));
        }
        for v in ["", "false", "0", "Off", " no "] {
            assert!(!truthy(v));
        }
    }

    #[test]
    fn patterns_and_effects_wire_form() {
        let t: Transition = serde_json::from_value(json!({
            "screen": "*", "on": {"click": "Save"}, "to": "main",
            "effects": [{"set": {"var": "a", "value": "b"}}, {"toggle": "c"}, {"input": "d"}, {"copy": {"to": "e", "from": "f"}}]
        }))
        .unwrap();
        assert_eq!(t.on, ActionPattern::Click("Save".into()));
        assert_eq!(t.effects.len(), 4);
        let back: ActionPattern = serde_json::from_value(json!("back")).unwrap();
        assert_eq!(back, ActionPattern::Back);
        let s: ActionPattern = serde_json::from_value(json!({"scroll": "down"})).unwrap();
        assert_eq!(s, ActionPattern::Scroll(Direction::Down));
    }

    #[test]
    fn app_validation() {
        let app: AppSpec = serde_json::from_value(json!({
            "name": "x", "display_name": "X", "package": "p", "start": "a",
            "screens": {"a": {"root": {"class": "F"}}},
            "transitions": [{"screen": "a", "on": "back", "to": "nowhere"}]
        }))
        .unwrap();
        assert!(matches!(app.validate(), Err(SimError::Config(m)) if m.contains("nowhere")));
    }
}
