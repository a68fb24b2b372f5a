//! Grounding of natural-language commands into concrete device actions.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::error::LlmError;
use crate::llm::{CallPurpose, LlmSession};
use crate::prompts::TemplateId;
use crate::screen::{GrounderScreenView, ScreenDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim().to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityNickname {
    AppDrawer,
    QuickSettings,
}

impl ActivityNickname {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivityNickname::AppDrawer => "app_drawer",
            ActivityNickname::QuickSettings => "quick_settings",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "app_drawer" => Some(ActivityNickname::AppDrawer),
            "quick_settings" => Some(ActivityNickname::QuickSettings),
            _ => None,
        }
    }
}

/// A device-level action in the grounder's wire schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action_type", rename_all = "snake_case")]
pub enum GroundedAction {
    Click { x: i32, y: i32 },
    InputText { text: String, x: i32, y: i32 },
    KeyboardEnter,
    NavigateHome,
    NavigateBack,
    Scroll { direction: Direction },
    OpenApp { app_name: String },
    LaunchAdbActivity { activity_nickname: ActivityNickname },
    Wait,
}

impl GroundedAction {
    pub fn action_type(&self) -> &'static str {
        match self {
            GroundedAction::Click { .. } => "click",
            GroundedAction::InputText { .. } => "input_text",
            GroundedAction::KeyboardEnter => "keyboard_enter",
            GroundedAction::NavigateHome => "navigate_home",
            GroundedAction::NavigateBack => "navigate_back",
            GroundedAction::Scroll { .. } => "scroll",
            GroundedAction::OpenApp { .. } => "open_app",
            GroundedAction::LaunchAdbActivity { .. } => "launch_adb_activity",
            GroundedAction::Wait => "wait",
        }
    }

    pub fn coordinates(&self) -> Option<(i32, i32)> {
        match self {
            GroundedAction::Click { x, y } | GroundedAction::InputText { x, y, .. } => {
                Some((*x, *y))
            }
            _ => None,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("action serialization")
    }
}

impl fmt::Display for GroundedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundingParseError {
    #[error("no JSON object found in completion")]
    NoObject,
    #[error("unknown action_type {0:?}")]
    UnknownType(String),
    #[error("action {action} missing field {field}")]
    MissingField { action: String, field: &'static str },
    #[error("action {action} has invalid {field}: {value}")]
    InvalidField {
        action: String,
        field: &'static str,
        value: String,
    },
    #[error("coordinates ({x}, {y}) outside the {width}x{height} screen")]
    OutOfRange {
        x: i32,
        y: i32,
        width: i32,
        height: i32,
    },
}

impl GroundingParseError {
    pub fn fault(&self) -> GroundingFault {
        match self {
            GroundingParseError::OutOfRange { .. } => GroundingFault::Range,
            _ => GroundingFault::Parse,
        }
    }
}

/// Why the performed action differs from the commanded one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingFault {
    /// No decodable action in the completion.
    Parse,
    /// Coordinates outside the screen.
    Range,
    /// The grounder call itself failed.
    Backend,
    Noop,
    WrongElement,
    WrongText,
}

impl GroundingFault {
    /// Faults where nothing reached the device.
    pub fn is_no_action(self) -> bool {
        matches!(
            self,
            GroundingFault::Parse
                | GroundingFault::Range
                | GroundingFault::Backend
                | GroundingFault::Noop
        )
    }
}

/// The commanded/grounded/performed triple for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingOutcome {
    pub commanded: String,
    pub grounded: Option<GroundedAction>,
    /// Filled by the environment.
    pub performed: Option<GroundedAction>,
    pub fault: Option<GroundingFault>,
}

/// Which text fills the grounder's goal slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSlot {
    #[default]
    StepCommand,
    EpisodeGoal,
}

pub fn build_grounder_prompt(view: &GrounderScreenView, step_goal: &str) -> String {
    TemplateId::Grounder
        .template()
        .render(&[
            ("SCREEN_REPRESENTATION", &view.to_prompt_json()),
            ("GOAL", step_goal),
        ])
        .expect("grounder template binds two slots")
}

/// Byte ranges of balanced `{...}` regions, in order of their opening brace.
/// Braces inside JSON string literals are ignored.
fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    for start in (0..bytes.len()).filter(|&i| bytes[i] == b'{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        found.push(&text[start..=i]);
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    found
}

/// First balanced region that decodes as a JSON object.
pub fn extract_first_object(text: &str) -> Option<Map<String, Value>> {
    balanced_objects(text)
        .into_iter()
        .find_map(|s| match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        })
}

fn field<'a>(
    obj: &'a Map<String, Value>,
    action: &str,
    name: &'static str,
) -> Result<&'a Value, GroundingParseError> {
    obj.get(name)
        .filter(|v| !v.is_null())
        .ok_or(GroundingParseError::MissingField {
            action: action.to_string(),
            field: name,
        })
}

fn coord(
    obj: &Map<String, Value>,
    action: &str,
    name: &'static str,
) -> Result<i32, GroundingParseError> {
    let v = field(obj, action, name)?;
    v.as_f64()
        .filter(|f| f.is_finite() && f.abs() < i32::MAX as f64)
        .map(|f| f.round() as i32)
        .ok_or_else(|| GroundingParseError::InvalidField {
            action: action.to_string(),
            field: name,
            value: v.to_string(),
        })
}

fn string(
    obj: &Map<String, Value>,
    action: &str,
    name: &'static str,
) -> Result<String, GroundingParseError> {
    let v = field(obj, action, name)?;
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| GroundingParseError::InvalidField {
            action: action.to_string(),
            field: name,
            value: v.to_string(),
        })
}

/// Decodes a single action object against the closed action schema.
pub fn decode_action(obj: &Map<String, Value>) -> Result<GroundedAction, GroundingParseError> {
    let kind = match obj.get("action_type") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(other) => return Err(GroundingParseError::UnknownType(other.to_string())),
        None => {
            return Err(GroundingParseError::MissingField {
                action: "?".into(),
                field: "action_type",
            })
        }
    };
    let k = kind.as_str();
    let action = match k {
        "click" => GroundedAction::Click {
            x: coord(obj, k, "x")?,
            y: coord(obj, k, "y")?,
        },
        "input_text" => GroundedAction::InputText {
            text: string(obj, k, "text")?,
            x: coord(obj, k, "x")?,
            y: coord(obj, k, "y")?,
        },
        "keyboard_enter" => GroundedAction::KeyboardEnter,
        "navigate_home" => GroundedAction::NavigateHome,
        "navigate_back" => GroundedAction::NavigateBack,
        "scroll" => {
            let raw = string(obj, k, "direction")?;
            GroundedAction::Scroll {
                direction: Direction::parse(&raw).ok_or(GroundingParseError::InvalidField {
                    action: kind.clone(),
                    field: "direction",
                    value: raw,
                })?,
            }
        }
        "open_app" => GroundedAction::OpenApp {
            app_name: string(obj, k, "app_name")?,
        },
        "launch_adb_activity" => {
            let raw = string(obj, k, "activity_nickname")?;
            GroundedAction::LaunchAdbActivity {
                activity_nickname: ActivityNickname::parse(&raw).ok_or(
                    GroundingParseError::InvalidField {
                        action: kind.clone(),
                        field: "activity_nickname",
                        value: raw,
                    },
                )?,
            }
        }
        "wait" => GroundedAction::Wait,
        _ => return Err(GroundingParseError::UnknownType(kind)),
    };
    Ok(action)
}

/// Decodes the first JSON object in `completion` and checks its coordinates
/// against the screen.
pub fn parse_grounded_action(
    completion: &str,
    dims: ScreenDims,
) -> Result<GroundedAction, GroundingParseError> {
    let obj = extract_first_object(completion).ok_or(GroundingParseError::NoObject)?;
    let action = decode_action(&obj)?;
    if let Some((x, y)) = action.coordinates() {
        if x < 0 || y < 0 || x >= dims.width || y >= dims.height {
            return Err(GroundingParseError::OutOfRange {
                x,
                y,
                width: dims.width,
                height: dims.height,
            });
        }
    }
    Ok(action)
}

/// Renders the prompt, queries the backend greedily and parses the answer.
/// Backend failures become a `Backend` fault, except fixture gaps, which
/// are returned so the caller can abort the episode.
pub fn ground(
    session: &mut LlmSession,
    commanded: &str,
    slot_text: &str,
    view: &GrounderScreenView,
) -> Result<GroundingOutcome, LlmError> {
    let prompt = build_grounder_prompt(view, slot_text);
    let mut outcome = GroundingOutcome {
        commanded: commanded.to_string(),
        grounded: None,
        performed: None,
        fault: None,
    };
    match session.greedy(CallPurpose::Grounder, prompt) {
        Ok(completion) => match parse_grounded_action(&completion, view.screen_dims) {
            Ok(action) => outcome.grounded = Some(action),
            Err(e) => outcome.fault = Some(e.fault()),
        },
        Err(e) if e.is_fixture_gap() => return Err(e),
        Err(_) => outcome.fault = Some(GroundingFault::Backend),
    }
    Ok(outcome)
}
