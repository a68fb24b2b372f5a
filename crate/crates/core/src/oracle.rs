//! A rule-based completion backend for desk-scale runs. It reads the
//! rendered prompt, recognises which component sent it, and answers from
//! the prompt contents plus per-task policy tables in the suite file.

use serde::{Deserialize, Serialize};

use crate::error::LlmError;
use crate::grounder::{Direction, GroundedAction};
use crate::latent::NO_MISTAKES;
use crate::llm::{CompletionBackend, CompletionRequest};
use crate::screen::ViewElement;
use crate::sim::Suite;

/// Command the minus policy issues once its plan is exhausted.
pub const ORACLE_DONE: &str = "You should be done.";
/// Plus-policy fallback when no rule matches.
pub const ORACLE_FALLBACK: &str = "go back";
pub use crate::latent::NO_ACTION_ANSWER;
pub const UNGROUNDABLE: &str = "I cannot find an element for this action.";

/// Fires when every `when` string occurs in the screen text and no `unless` does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    #[serde(default)]
    pub when: Vec<String>,
    #[serde(default)]
    pub unless: Vec<String>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeRule {
    #[serde(default)]
    pub when: Vec<String>,
    #[serde(default)]
    pub unless: Vec<String>,
    pub say: String,
}

fn fires(when: &[String], unless: &[String], text: &str) -> bool {
    when.iter().all(|w| text.contains(w.as_str()))
        && !unless.iter().any(|u| text.contains(u.as_str()))
}

/// Per-task policy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleTask {
    /// Open-loop command sequence used by planners without latent state.
    #[serde(default)]
    pub plan: Vec<String>,
    /// Screen-conditioned rules used by planners with latent state.
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
    /// The completion answer is "Yes" iff the screen summary contains all of these.
    #[serde(default)]
    pub done_when: Vec<String>,
    #[serde(default)]
    pub mistakes: Vec<MistakeRule>,
}

/// Rules checked before any task rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleGlobal {
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
}

#[derive(Debug, Clone)]
pub struct PolicyOracle {
    tasks: Vec<(String, OracleTask)>,
    global: OracleGlobal,
}

/// Text between `start` (exclusive) and the next `end` (exclusive).
fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(&rest[..rest.find(end)?])
}

fn after_last<'a>(text: &'a str, marker: &str) -> &'a str {
    text.rfind(marker)
        .map_or(text, |i| &text[i + marker.len()..])
}

const GOAL_MARKER: &str = "I asked you to use an Android phone";

impl PolicyOracle {
    pub fn new(tasks: Vec<(String, OracleTask)>, global: OracleGlobal) -> Self {
        Self { tasks, global }
    }

    pub fn from_suite(suite: &Suite) -> Self {
        let tasks = suite
            .tasks
            .iter()
            .filter_map(|t| t.oracle.clone().map(|o| (t.goal.clone(), o)))
            .collect();
        Self::new(tasks, suite.oracle.clone())
    }

    fn task_for(&self, prompt: &str) -> Result<&OracleTask, LlmError> {
        let block = after_last(prompt, GOAL_MARKER);
        self.tasks
            .iter()
            .filter(|(goal, _)| block.contains(goal.as_str()))
            .max_by_key(|(goal, _)| goal.len())
            .map(|(_, t)| t)
            .ok_or_else(|| gap(prompt))
    }

    fn answer(&self, prompt: &str) -> Result<String, LlmError> {
        if prompt.starts_with("Given a mockup") {
            return Ok(ground_answer(prompt));
        }
        if prompt.starts_with("Here are some examples of how") {
            let raw = between(prompt, "Here is a new request: ", "'\nPlease rephrase")
                .ok_or_else(|| gap(prompt))?;
            return Ok(format!(" {raw}"));
        }
        if prompt.starts_with("I will show you two screens") {
            let cmd = between(
                prompt,
                "Possible action: ",
                "\nHere is a description of the first screen:\n",
            );
            let prev = between(
                prompt,
                "of the first screen:\n",
                "\nHere is a description of the second screen:",
            );
            let curr = between(prompt, "of the second screen:\n", "\nReal action:");
            let (Some(cmd), Some(prev), Some(curr)) = (cmd, prev, curr) else {
                return Err(gap(prompt));
            };
            return Ok(if prev == curr {
                format!(" {NO_ACTION_ANSWER}")
            } else {
                format!(" {cmd}")
            });
        }
        if prompt.starts_with("Here is a description of a screen") {
            let screen = between(prompt, "Android phone:\n", "\n\nAdditionally,")
                .ok_or_else(|| gap(prompt))?;
            return Ok(summarize(screen));
        }
        if prompt.starts_with("I will describe in detail") {
            let history =
                between(prompt, "actions were:\n", "\nIn addition,").ok_or_else(|| gap(prompt))?;
            let items: Vec<&str> = history
                .lines()
                .map(|l| l.split_once(") ").map_or(l, |(_, rest)| rest).trim())
                .filter(|l| !l.is_empty() && !l.starts_with("Nothing."))
                .collect();
            return Ok(if items.is_empty() {
                " just started.".into()
            } else {
                format!(" done the following: {}.", items.join("; "))
            });
        }
        if prompt.contains("Yes or No, have you completed") {
            let task = self.task_for(prompt)?;
            let summary = between(prompt, "currently see: ", "\nHere is a next step")
                .ok_or_else(|| gap(prompt))?;
            let done = !task.done_when.is_empty()
                && task.done_when.iter().all(|d| summary.contains(d.as_str()));
            return Ok(if done { " Yes.".into() } else { " No.".into() });
        }
        if prompt.contains("If no mistakes have been made") {
            let task = self.task_for(prompt)?;
            let screen = between(
                prompt,
                "description of the current screen:\n",
                "\n\nIf no mistakes",
            )
            .ok_or_else(|| gap(prompt))?;
            let said = task
                .mistakes
                .iter()
                .find(|m| fires(&m.when, &m.unless, screen))
                .map(|m| m.say.clone());
            return Ok(format!(
                " {}",
                said.unwrap_or_else(|| NO_MISTAKES.to_string())
            ));
        }
        self.plan(prompt)
    }

    fn plan(&self, prompt: &str) -> Result<String, LlmError> {
        let task = self.task_for(prompt)?;
        let block = after_last(prompt, GOAL_MARKER);
        let screen = after_last(block, "of the current screen:\n");
        let screen = screen
            .find("\nWhat is the next action")
            .or_else(|| screen.find("\nPlease think about"))
            .map_or(screen, |i| &screen[..i]);
        let react = prompt.starts_with("Here are some examples of thoughts");
        let cot = prompt.ends_with("Let's think step by step.");
        let plus = block.contains("summary of your progress");

        let action = if plus {
            self.global
                .rules
                .iter()
                .chain(task.rules.iter())
                .find(|r| fires(&r.when, &r.unless, screen))
                .map_or_else(|| ORACLE_FALLBACK.to_string(), |r| r.action.clone())
        } else {
            let taken = if react {
                let history =
                    between(block, "thoughts and actions:\n", "\nThe actions above").unwrap_or("");
                history
                    .lines()
                    .filter(|l| {
                        l.strip_prefix("Action ").is_some_and(|r| {
                            r.split_once(':')
                                .is_some_and(|(n, _)| n.chars().all(|c| c.is_ascii_digit()))
                        })
                    })
                    .count()
            } else {
                let history =
                    between(block, "so far:\n", "\nHere is a detailed description").unwrap_or("");
                history
                    .lines()
                    .filter(|l| !l.trim().is_empty() && !l.trim().ends_with(") None."))
                    .count()
            };
            task.plan
                .get(taken)
                .cloned()
                .unwrap_or_else(|| ORACLE_DONE.to_string())
        };

        let finished = action == ORACLE_DONE;
        Ok(if react {
            if finished {
                "I have completed every step of the request.\nAction: done".into()
            } else {
                format!("I should continue with the next step.\nAction: {action}")
            }
        } else if cot {
            format!(" I will take the next step toward the goal. Answer: {action}")
        } else if finished {
            " be done.".into()
        } else {
            format!(" {action}")
        })
    }
}

fn gap(prompt: &str) -> LlmError {
    LlmError::FixtureGap {
        prompt_head: prompt.chars().take(80).collect(),
    }
}

fn summarize(screen: &str) -> String {
    let lines: Vec<&str> = screen
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        " This screen is empty.".into()
    } else {
        format!(" This screen shows {}.", lines.join("; "))
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim().trim_end_matches('.');
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s)
}

fn find_element<'a>(elements: &'a [ViewElement], label: &str) -> Option<&'a ViewElement> {
    let label = unquote(label);
    elements
        .iter()
        .find(|e| e.text == label)
        .or_else(|| elements.iter().find(|e| e.text.eq_ignore_ascii_case(label)))
}

/// Maps a command from the oracle grammar to an action on the listed elements.
pub fn ground_command(command: &str, elements: &[ViewElement]) -> Option<GroundedAction> {
    let cmd = command.trim();
    let lower = cmd.to_ascii_lowercase();
    let rest = |n: usize| cmd[n..].trim();
    let click_at = |e: &ViewElement| GroundedAction::Click {
        x: e.center.0,
        y: e.center.1,
    };
    match lower.trim_end_matches('.') {
        "go back" | "navigate back" | "press back" => return Some(GroundedAction::NavigateBack),
        "go home" | "navigate home" | "press home" => return Some(GroundedAction::NavigateHome),
        "press enter" => return Some(GroundedAction::KeyboardEnter),
        "wait" => return Some(GroundedAction::Wait),
        _ => {}
    }
    if let Some(dir) = lower.strip_prefix("scroll ") {
        let d = Direction::ALL
            .into_iter()
            .find(|d| dir.trim_end_matches('.').trim() == d.as_str())?;
        return Some(GroundedAction::Scroll { direction: d });
    }
    if lower.starts_with("open ") {
        let name = rest(5).trim_end_matches('.');
        let name = name.strip_suffix(" app").unwrap_or(name);
        let name = name.strip_prefix("the ").unwrap_or(name);
        return Some(GroundedAction::OpenApp {
            app_name: name.trim().to_string(),
        });
    }
    if lower.starts_with("type ") {
        let body = rest(5);
        let split = body.rfind(" into ")?;
        let (text, target) = (&body[..split], &body[split + 6..]);
        let e = find_element(elements, target)?;
        return Some(GroundedAction::InputText {
            text: unquote(text).to_string(),
            x: e.center.0,
            y: e.center.1,
        });
    }
    for verb in ["tap ", "click ", "select "] {
        if lower.starts_with(verb) {
            return find_element(elements, rest(verb.len())).map(click_at);
        }
    }
    None
}

fn ground_answer(prompt: &str) -> String {
    let goal = between(prompt, "User Goal: ", "\nChoose from").unwrap_or("");
    let elements: Vec<ViewElement> = prompt
        .lines()
        .find(|l| l.starts_with("{\"UI elements\""))
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .and_then(|v| v.get("UI elements").cloned())
        .and_then(|v| v.as_array().cloned())
        .unwrap_or_default()
        .iter()
        .filter_map(|e| {
            let pair = |k: &str| {
                let a = e.get(k)?.as_array()?;
                Some((a.first()?.as_i64()? as i32, a.get(1)?.as_i64()? as i32))
            };
            Some(ViewElement {
                text: e.get("text")?.as_str()?.to_string(),
                center: pair("center")?,
                size: pair("size")?,
            })
        })
        .collect();
    match ground_command(goal, &elements) {
        Some(a) => format!("\n{}\n```", a.to_json_string()),
        None => UNGROUNDABLE.into(),
    }
}

impl CompletionBackend for PolicyOracle {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        request.validate()?;
        let answer = self.answer(&request.prompt)?;
        Ok(vec![answer; request.n as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounder::{build_grounder_prompt, parse_grounded_action};
    use crate::latent::{
        completion_prompt, mistakes_prompt, previous_action_prompt, screen_summary_prompt,
    };
    use crate::screen::{DescriptionLine, GrounderScreenView, ScreenDescription, ScreenDims};

    fn desc(lines: &[&str]) -> ScreenDescription {
        ScreenDescription {
            lines: lines
                .iter()
                .map(|l| DescriptionLine {
                    depth: 0,
                    text: l.to_string(),
                })
                .collect(),
        }
    }

    fn oracle() -> PolicyOracle {
        PolicyOracle::new(
            vec![(
                "Turn on dark theme.".into(),
                OracleTask {
                    plan: vec!["open Settings".into(), "tap \"Display\"".into()],
                    rules: vec![PolicyRule {
                        when: vec!["Display".into()],
                        unless: vec![],
                        action: "tap \"Display\"".into(),
                    }],
                    done_when: vec!["that is on".into()],
                    mistakes: vec![MistakeRule {
                        when: vec!["Bedtime".into()],
                        unless: vec![],
                        say: "Go back.".into(),
                    }],
                },
            )],
            OracleGlobal::default(),
        )
    }

    fn ask(prompt: &str) -> String {
        oracle().answer(prompt).unwrap()
    }

    #[test]
    fn grammar() {
        let els = vec![
            ViewElement {
                text: "Display".into(),
                center: (10, 20),
                size: (1, 1),
            },
            ViewElement {
                text: "Title".into(),
                center: (30, 40),
                size: (1, 1),
            },
        ];
        assert_eq!(
            ground_command("tap \"Display\"", &els),
            Some(GroundedAction::Click { x: 10, y: 20 })
        );
        assert_eq!(
            ground_command("click display", &els),
            Some(GroundedAction::Click { x: 10, y: 20 })
        );
        assert_eq!(
            ground_command("type \"Exercise\" into \"Title\"", &els),
            Some(GroundedAction::InputText {
                text: "Exercise".into(),
                x: 30,
                y: 40
            })
        );
        assert_eq!(
            ground_command("open the Clock app", &els),
            Some(GroundedAction::OpenApp {
                app_name: "Clock".into()
            })
        );
        assert_eq!(
            ground_command("scroll down", &els),
            Some(GroundedAction::Scroll {
                direction: Direction::Down
            })
        );
        assert_eq!(ground_command("tap \"Sound\"", &els), None);
    }

    #[test]
    fn grounder_round_trip() {
        let view = GrounderScreenView {
            elements: vec![ViewElement {
                text: "Display".into(),
                center: (10, 20),
                size: (4, 4),
            }],
            screen_dims: ScreenDims::default(),
        };
        let answer = ask(&build_grounder_prompt(&view, "tap \"Display\""));
        assert_eq!(
            parse_grounded_action(&answer, ScreenDims::default()),
            Ok(GroundedAction::Click { x: 10, y: 20 })
        );
        let miss = ask(&build_grounder_prompt(&view, "tap \"Nope\""));
        assert!(parse_grounded_action(&miss, ScreenDims::default()).is_err());
    }

    #[test]
    fn latent_answers() {
        let a = desc(&["a button with the text \"Display\""]);
        let b = desc(&["a switch with the text \"Dark theme\" that is on"]);
        assert_eq!(
            ask(&previous_action_prompt("tap it", &a, &a)).trim(),
            NO_ACTION_ANSWER
        );
        assert_eq!(
            ask(&previous_action_prompt("tap it", &a, &b)).trim(),
            "tap it"
        );
        let s = ask(&screen_summary_prompt(&b, None));
        assert!(s.contains("that is on"));
        assert_eq!(
            ask(&completion_prompt("Turn on dark theme.", &[], &s, "wait")).trim(),
            "Yes."
        );
        let s2 = ask(&screen_summary_prompt(&a, None));
        assert_eq!(
            ask(&completion_prompt("Turn on dark theme.", &[], &s2, "wait")).trim(),
            "No."
        );
        assert_eq!(
            ask(&mistakes_prompt("Turn on dark theme.", "x", &a)).trim(),
            NO_MISTAKES
        );
        assert_eq!(
            ask(&mistakes_prompt(
                "Turn on dark theme.",
                "x",
                &desc(&["Bedtime"])
            ))
            .trim(),
            "Go back."
        );
    }

    #[test]
    fn unknown_goal_is_a_fixture_gap() {
        let a = desc(&["x"]);
        assert!(oracle()
            .answer(&completion_prompt("Something else.", &[], "s", "c"))
            .unwrap_err()
            .is_fixture_gap());
        assert!(oracle().answer(&mistakes_prompt("Other", "x", &a)).is_err());
    }
}
