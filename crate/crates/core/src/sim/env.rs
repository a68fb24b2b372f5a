//! The seedable device environment.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::{perturb, EventModel, GroundingFaultModel, NoiseChannel, NoiseDraw, NoiseModel};
use super::render::{hit_test, render_background, render_screen, RenderedScreen, HOME_SCREEN_ID};
use super::spec::{ActionPattern, AppSpec, DeviceSnapshot, Effect, TaskSpec, World, LAUNCHER_APP};
use super::truth::{ActionTruth, EnvEvent, EpisodeTruth, MistakeEntry, MistakeKind, StateTruth};
use crate::error::SimError;
use crate::grounder::{ActivityNickname, GroundedAction, GroundingFault};
use crate::screen::{prune_invisible, AccessibilityNode, AccessibilityTree, Bounds, ScreenDims};

pub const POPUP_TEXT: &str = "Special offer! Upgrade to premium today.";
pub const POPUP_CLOSE: &str = "Close";
const POPUP_CLOSE_KEY: &str = "__popup_close";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub noise: NoiseModel,
    pub faults: GroundingFaultModel,
    pub events: EventModel,
    pub dims: ScreenDims,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.noise.validate()?;
        self.faults.validate()?;
        self.events.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortCause {
    FixtureGap,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TerminationReason {
    AgentStopped,
    RepeatedActions,
    MaxSteps,
    Aborted { cause: AbortCause, message: String },
}

/// Number of identical trailing commands that ends an episode.
pub const REPEAT_LIMIT: usize = 3;

/// Agent stop first, then three identical trailing commands, then the step cap.
pub fn check_termination(
    commanded: &[String],
    steps_taken: usize,
    max_steps: usize,
    agent_stopped: bool,
) -> Option<TerminationReason> {
    if agent_stopped {
        return Some(TerminationReason::AgentStopped);
    }
    if commanded.len() >= REPEAT_LIMIT {
        let tail = &commanded[commanded.len() - REPEAT_LIMIT..];
        if tail.iter().all(|c| *c == tail[0]) {
            return Some(TerminationReason::RepeatedActions);
        }
    }
    (steps_taken >= max_steps).then_some(TerminationReason::MaxSteps)
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub performed: Option<GroundedAction>,
    pub fault: Option<GroundingFault>,
    pub events: Vec<EnvEvent>,
}

#[derive(Debug, Clone)]
struct DeviceState {
    app: String,
    screen: String,
    vars: BTreeMap<String, String>,
    visited: std::collections::BTreeSet<String>,
    stack: Vec<(String, String)>,
    popup: bool,
}

impl DeviceState {
    fn qualified(&self) -> String {
        format!("{}/{}", self.app, self.screen)
    }

    fn go(&mut self, app: &str, screen: &str) {
        self.app = app.to_string();
        self.screen = screen.to_string();
        self.visited.insert(self.qualified());
    }
}

pub struct Environment {
    world: Arc<World>,
    task: TaskSpec,
    config: EnvConfig,
    noise_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    event_rng: ChaCha8Rng,
    state: DeviceState,
    observation: AccessibilityTree,
    observation_stale: bool,
    draws: Vec<NoiseDraw>,
    truth: EpisodeTruth,
    steps: usize,
    terminated: bool,
}

impl Environment {
    /// Creates the environment and emits the initial observation.
    pub fn reset(world: Arc<World>, task: &TaskSpec, config: EnvConfig) -> Result<Self, SimError> {
        config.validate()?;
        world.validate_task(task)?;
        let mut vars = world.initial_vars();
        vars.extend(task.init.clone());
        let mut state = DeviceState {
            app: LAUNCHER_APP.into(),
            screen: HOME_SCREEN_ID.into(),
            vars,
            visited: Default::default(),
            stack: Vec::new(),
            popup: false,
        };
        state.go(LAUNCHER_APP, HOME_SCREEN_ID);
        let mut env = Self {
            noise_rng: ChaCha8Rng::seed_from_u64(config.noise.seed),
            fault_rng: ChaCha8Rng::seed_from_u64(config.faults.seed),
            event_rng: ChaCha8Rng::seed_from_u64(config.events.seed),
            world,
            task: task.clone(),
            config,
            state,
            observation: AccessibilityTree::bare(config.dims),
            observation_stale: false,
            draws: Vec::new(),
            truth: EpisodeTruth::default(),
            steps: 0,
            terminated: false,
        };
        env.record_state(Vec::new());
        env.emit_observation();
        Ok(env)
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn dims(&self) -> ScreenDims {
        self.config.dims
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The observation emitted for the current step.
    pub fn observe(&self) -> &AccessibilityTree {
        &self.observation
    }

    pub fn observation_is_stale(&self) -> bool {
        self.observation_stale
    }

    pub fn noise_draws(&self) -> &[NoiseDraw] {
        &self.draws
    }

    pub fn ground_truth(&self) -> &EpisodeTruth {
        &self.truth
    }

    pub fn snapshot(&self) -> DeviceSnapshot {
        DeviceSnapshot {
            screen: self.state.qualified(),
            vars: self.state.vars.clone(),
            visited: self.state.visited.clone(),
            popup: self.state.popup,
        }
    }

    pub fn terminate(&mut self) {
        self.terminated = true;
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    fn app(&self) -> &AppSpec {
        self.world.app(&self.state.app).expect("current app exists")
    }

    /// The current screen without noise, including any pop-up overlay.
    pub fn render_truth(&self) -> RenderedScreen {
        let app = self.app();
        let screen = &app.screens[&self.state.screen];
        let mut rendered = render_screen(screen, &app.package, &self.state.vars, self.config.dims);
        if self.state.popup {
            let w = self.config.dims.width;
            let h = self.config.dims.height;
            let dialog = Bounds::new(w / 12, h * 3 / 8, w - w / 12, h * 5 / 8);
            let mid = (dialog.top + dialog.bottom) / 2;
            let mut node =
                AccessibilityNode::new("android.widget.FrameLayout", "com.example.ads", dialog);
            node.children = vec![
                AccessibilityNode::new(
                    "android.widget.TextView",
                    "com.example.ads",
                    Bounds::new(dialog.left, dialog.top, dialog.right, mid),
                )
                .with_text(POPUP_TEXT),
                AccessibilityNode::new(
                    "android.widget.Button",
                    "com.example.ads",
                    Bounds::new(dialog.left, mid, dialog.right, dialog.bottom),
                )
                .with_text(POPUP_CLOSE),
            ];
            rendered
                .keys
                .extend([None, None, Some(POPUP_CLOSE_KEY.to_string())]);
            rendered.tree.root.children.push(node);
        }
        rendered
    }

    /// Elements the noise model may inject on the current screen.
    pub fn background_pool(&self) -> Vec<AccessibilityNode> {
        let app = self.app();
        render_background(
            &app.screens[&self.state.screen],
            &app.package,
            &self.state.vars,
        )
    }

    fn emit_observation(&mut self) {
        let t = self.truth.states.len() - 1;
        if t >= 1 {
            let u: f64 = self.noise_rng.gen();
            self.draws.push(NoiseDraw {
                step: t,
                channel: NoiseChannel::Stale,
                target: 0,
                u,
            });
            if u < self.config.noise.p_stale_tree {
                self.observation_stale = true;
                return;
            }
        }
        self.observation_stale = false;
        let truth = self.render_truth().tree;
        let pool = self.background_pool();
        self.observation = perturb(
            &truth,
            &pool,
            &self.config.noise,
            &mut self.noise_rng,
            t,
            &mut self.draws,
        );
    }

    fn record_state(&mut self, mistakes: Vec<MistakeEntry>) {
        let snapshot = self.snapshot();
        self.truth.states.push(StateTruth {
            step: self.truth.states.len(),
            complete: self.task.complete_when.eval(&snapshot),
            snapshot,
            outstanding_mistakes: mistakes,
        });
    }

    /// Applies the grounded action through the fault model, advances the
    /// device, and emits the next observation. `grounded` is `None` when
    /// grounding failed; `grounding_fault` then says why.
    pub fn step(
        &mut self,
        commanded: &str,
        grounded: Option<&GroundedAction>,
        grounding_fault: Option<GroundingFault>,
    ) -> Result<StepReport, SimError> {
        if self.terminated {
            return Err(SimError::Terminated);
        }
        // both fault draws are taken every step so the stream stays aligned
        let u_kind: f64 = self.fault_rng.gen();
        let u_aux: f64 = self.fault_rng.gen();
        let before = self.render_truth();
        let (performed, fault) = match grounded {
            None => (None, Some(grounding_fault.unwrap_or(GroundingFault::Parse))),
            Some(action) => self.apply_fault_model(action, u_kind, u_aux, &before),
        };
        let description = describe_performed(performed.as_ref(), &before);
        let mut events = match &performed {
            Some(action) => self.perform(action, &before),
            None => Vec::new(),
        };
        let u_popup: f64 = self.event_rng.gen();
        if !self.state.popup && u_popup < self.config.events.p_popup {
            self.state.popup = true;
            events.push(EnvEvent::PopupShown);
        }

        let step = self.steps;
        self.steps += 1;
        let mut ledger = self
            .truth
            .states
            .last()
            .map(|s| s.outstanding_mistakes.clone())
            .unwrap_or_default();
        let landed = self.state.qualified();
        let on_path = self.task.on_path(&landed);
        let moved = events
            .iter()
            .any(|e| matches!(e, EnvEvent::Transition { .. }));
        if fault.is_none() && moved && on_path {
            ledger.clear();
        } else {
            if let Some(f) = fault {
                ledger.push(MistakeEntry {
                    step,
                    kind: MistakeKind::Fault { fault: f },
                });
            }
            let has_off_path = ledger
                .iter()
                .any(|m| matches!(m.kind, MistakeKind::OffPath { .. }));
            if !on_path && !has_off_path {
                ledger.push(MistakeEntry {
                    step,
                    kind: MistakeKind::OffPath { screen: landed },
                });
            }
        }
        self.truth.actions.push(ActionTruth {
            step,
            commanded: commanded.to_string(),
            grounded: grounded.cloned(),
            performed: performed.clone(),
            performed_description: description,
            fault,
            events: events.clone(),
        });
        self.record_state(ledger);
        self.emit_observation();
        if self.observation_stale {
            events.push(EnvEvent::StaleObservation);
        }
        Ok(StepReport {
            performed,
            fault,
            events,
        })
    }

    fn apply_fault_model(
        &self,
        action: &GroundedAction,
        u_kind: f64,
        u_aux: f64,
        screen: &RenderedScreen,
    ) -> (Option<GroundedAction>, Option<GroundingFault>) {
        let m = &self.config.faults;
        if u_kind < m.p_noop {
            return (None, Some(GroundingFault::Noop));
        }
        if u_kind < m.p_noop + m.p_wrong_element {
            if let Some(moved) = wrong_element(action, &screen.tree, self.config.dims) {
                return (Some(moved), Some(GroundingFault::WrongElement));
            }
        } else if u_kind < m.p_noop + m.p_wrong_element + m.p_wrong_text {
            if let GroundedAction::InputText { text, x, y } = action {
                let chars: Vec<char> = text.chars().collect();
                if !chars.is_empty() {
                    let idx = ((u_aux * chars.len() as f64) as usize).min(chars.len() - 1);
                    let perturbed: String = chars
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != idx)
                        .map(|(_, c)| *c)
                        .collect();
                    return (
                        Some(GroundedAction::InputText {
                            text: perturbed,
                            x: *x,
                            y: *y,
                        }),
                        Some(GroundingFault::WrongText),
                    );
                }
            }
        }
        (Some(action.clone()), None)
    }

    /// Keys of the hit chain, deepest first.
    fn hit_keys(screen: &RenderedScreen, x: i32, y: i32) -> Vec<String> {
        hit_test(&screen.tree, x, y)
            .unwrap_or_default()
            .into_iter()
            .rev()
            .filter_map(|i| screen.keys[i].clone())
            .collect()
    }

    fn perform(&mut self, action: &GroundedAction, screen: &RenderedScreen) -> Vec<EnvEvent> {
        let from = self.state.qualified();
        match action {
            GroundedAction::Click { x, y } | GroundedAction::InputText { x, y, .. } => {
                let keys = Self::hit_keys(screen, *x, *y);
                if keys.is_empty() {
                    return vec![EnvEvent::Miss];
                }
                if self.state.popup {
                    if keys.iter().any(|k| k == POPUP_CLOSE_KEY)
                        && matches!(action, GroundedAction::Click { .. })
                    {
                        self.state.popup = false;
                        return vec![EnvEvent::PopupDismissed];
                    }
                    return vec![EnvEvent::NoEffect {
                        element: keys.first().cloned(),
                    }];
                }
                if self.state.app == LAUNCHER_APP && matches!(action, GroundedAction::Click { .. })
                {
                    if let Some(app) = keys.iter().find_map(|k| self.world.app_by_user_name(k)) {
                        let (name, start) = (app.name.clone(), app.start.clone());
                        return self.open(&name, &start, from);
                    }
                }
                let typed = match action {
                    GroundedAction::InputText { text, .. } => Some(text.as_str()),
                    _ => None,
                };
                for key in &keys {
                    let pattern = match typed {
                        Some(_) => ActionPattern::Type(key.clone()),
                        None => ActionPattern::Click(key.clone()),
                    };
                    if self.apply_pattern(&pattern, typed) {
                        return vec![EnvEvent::Transition {
                            from,
                            to: self.state.qualified(),
                        }];
                    }
                }
                vec![EnvEvent::NoEffect {
                    element: keys.first().cloned(),
                }]
            }
            GroundedAction::KeyboardEnter => self.pattern_or_no_effect(ActionPattern::Enter, from),
            GroundedAction::Scroll { direction } => {
                self.pattern_or_no_effect(ActionPattern::Scroll(*direction), from)
            }
            GroundedAction::NavigateBack => {
                if self.state.popup {
                    self.state.popup = false;
                    return vec![EnvEvent::PopupDismissed];
                }
                if self.apply_pattern(&ActionPattern::Back, None) {
                    return vec![EnvEvent::Transition {
                        from,
                        to: self.state.qualified(),
                    }];
                }
                match self.state.stack.pop() {
                    Some((app, screen)) => self.state.go(&app, &screen),
                    None if self.state.app != LAUNCHER_APP => {
                        self.state.go(LAUNCHER_APP, HOME_SCREEN_ID)
                    }
                    None => return vec![EnvEvent::NoEffect { element: None }],
                }
                vec![EnvEvent::Transition {
                    from,
                    to: self.state.qualified(),
                }]
            }
            GroundedAction::NavigateHome
            | GroundedAction::LaunchAdbActivity {
                activity_nickname: ActivityNickname::AppDrawer,
            } => self.go_home(from),
            GroundedAction::LaunchAdbActivity {
                activity_nickname: ActivityNickname::QuickSettings,
            } => vec![EnvEvent::NoEffect { element: None }],
            GroundedAction::OpenApp { app_name } => match self.world.app_by_user_name(app_name) {
                Some(app) => {
                    let (name, start) = (app.name.clone(), app.start.clone());
                    self.open(&name, &start, from)
                }
                None => vec![EnvEvent::Miss],
            },
            GroundedAction::Wait => vec![EnvEvent::Waited],
        }
    }

    fn go_home(&mut self, from: String) -> Vec<EnvEvent> {
        let mut events = Vec::new();
        if self.state.popup {
            self.state.popup = false;
            events.push(EnvEvent::PopupDismissed);
        }
        self.state.stack.clear();
        self.state.go(LAUNCHER_APP, HOME_SCREEN_ID);
        events.push(EnvEvent::Transition {
            from,
            to: self.state.qualified(),
        });
        events
    }

    fn open(&mut self, app: &str, start: &str, from: String) -> Vec<EnvEvent> {
        let mut events = Vec::new();
        if self.state.popup {
            self.state.popup = false;
            events.push(EnvEvent::PopupDismissed);
        }
        self.state.stack = vec![(LAUNCHER_APP.to_string(), HOME_SCREEN_ID.to_string())];
        self.state.go(app, start);
        events.push(EnvEvent::Transition {
            from,
            to: self.state.qualified(),
        });
        events
    }

    fn pattern_or_no_effect(&mut self, pattern: ActionPattern, from: String) -> Vec<EnvEvent> {
        if self.state.popup {
            return vec![EnvEvent::NoEffect { element: None }];
        }
        if self.apply_pattern(&pattern, None) {
            vec![EnvEvent::Transition {
                from,
                to: self.state.qualified(),
            }]
        } else {
            vec![EnvEvent::NoEffect { element: None }]
        }
    }

    /// Applies the first transition matching `pattern` on the current screen.
    fn apply_pattern(&mut self, pattern: &ActionPattern, typed: Option<&str>) -> bool {
        let app = self.app();
        let Some(t) = app
            .transitions_for(&self.state.screen)
            .find(|t| t.on == *pattern)
            .cloned()
        else {
            return false;
        };
        for effect in &t.effects {
            let vars = &mut self.state.vars;
            match effect {
                Effect::Set { var, value } => {
                    vars.insert(var.clone(), value.clone());
                }
                Effect::Toggle(var) => {
                    let on = vars.get(var).is_some_and(|v| super::spec::truthy(v));
                    vars.insert(var.clone(), (!on).to_string());
                }
                Effect::Input(var) => {
                    vars.insert(var.clone(), typed.unwrap_or("").to_string());
                }
                Effect::Copy { to, from } => {
                    let v = vars.get(from).cloned().unwrap_or_default();
                    vars.insert(to.clone(), v);
                }
            }
        }
        if let Some(to) = t.to.filter(|to| *to != self.state.screen) {
            let current = (self.state.app.clone(), self.state.screen.clone());
            self.state.stack.push(current);
            let app = self.state.app.clone();
            self.state.go(&app, &to);
        }
        true
    }
}

/// The leaf nearest to the tapped leaf (or to the tap point when no leaf
/// is hit), excluding that leaf. Ties go to the earlier leaf in pre-order.
fn wrong_element(
    action: &GroundedAction,
    tree: &AccessibilityTree,
    dims: ScreenDims,
) -> Option<GroundedAction> {
    let (x, y) = action.coordinates()?;
    let pruned = prune_invisible(tree, dims);
    let leaves: Vec<Bounds> = pruned
        .root
        .preorder()
        .into_iter()
        .skip(1)
        .filter(|n| n.is_leaf())
        .map(|n| n.bounds.clip(dims))
        .collect();
    let hit = leaves.iter().rposition(|b| b.contains(x, y));
    let origin = hit.map_or((x, y), |i| leaves[i].center());
    let dist = |b: &Bounds| {
        let (cx, cy) = b.center();
        let (dx, dy) = ((cx - origin.0) as i64, (cy - origin.1) as i64);
        dx * dx + dy * dy
    };
    let (_, target) = leaves
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != hit)
        .min_by_key(|(i, b)| (dist(b), *i))?;
    let (nx, ny) = target.center();
    Some(match action {
        GroundedAction::InputText { text, .. } => GroundedAction::InputText {
            text: text.clone(),
            x: nx,
            y: ny,
        },
        _ => GroundedAction::Click { x: nx, y: ny },
    })
}

/// Past-tense description of what reached the device.
pub fn describe_performed(action: Option<&GroundedAction>, screen: &RenderedScreen) -> String {
    let label_at = |x: i32, y: i32| -> Option<String> {
        let chain = hit_test(&screen.tree, x, y)?;
        let nodes = screen.tree.root.preorder();
        chain
            .iter()
            .rev()
            .find_map(|&i| nodes[i].label().map(str::to_string))
    };
    match action {
        None => "no action".into(),
        Some(GroundedAction::Click { x, y }) => match label_at(*x, *y) {
            Some(l) => format!("clicked \"{l}\""),
            None => "clicked an empty area".into(),
        },
        Some(GroundedAction::InputText { text, x, y }) => match label_at(*x, *y) {
            Some(l) => format!("typed \"{text}\" into \"{l}\""),
            None => format!("typed \"{text}\" into an empty area"),
        },
        Some(GroundedAction::KeyboardEnter) => "pressed enter".into(),
        Some(GroundedAction::NavigateHome) => "navigated home".into(),
        Some(GroundedAction::NavigateBack) => "navigated back".into(),
        Some(GroundedAction::Scroll { direction }) => format!("scrolled {}", direction.as_str()),
        Some(GroundedAction::OpenApp { app_name }) => format!("opened {app_name}"),
        Some(GroundedAction::LaunchAdbActivity { activity_nickname }) => match activity_nickname {
            ActivityNickname::AppDrawer => "opened the app drawer".into(),
            ActivityNickname::QuickSettings => "opened quick settings".into(),
        },
        Some(GroundedAction::Wait) => "waited".into(),
    }
}
