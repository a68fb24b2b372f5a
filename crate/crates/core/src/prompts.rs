//! Prompt templates shipped as text assets, with single-pass slot rendering.
//!
//! Brace templates use `{name}` slot markers; the grounder and goal
//! normalization templates use `<name>`. Only declared slot names are
//! substituted, so literal braces and angle brackets elsewhere in a template
//! are left alone, and substituted values are never re-scanned.

use std::collections::BTreeMap;

use thiserror::Error;

/// Bumped whenever a shipped template changes.
pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: slot {slot} is not bound")]
    Unbound {
        template: &'static str,
        slot: &'static str,
    },
    #[error("template {template}: unknown slot {slot}")]
    Unknown {
        template: &'static str,
        slot: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotStyle {
    Brace,
    Angle,
}

impl SlotStyle {
    fn delimiters(self) -> (char, char) {
        match self {
            SlotStyle::Brace => ('{', '}'),
            SlotStyle::Angle => ('<', '>'),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    PreviousAction,
    ScreenSummary,
    Progression,
    Mistakes,
    Completion,
    NormalizeGoal,
    ZeroShotMinus,
    ZeroShotPlus,
    CotScMinus,
    CotScPlus,
    ReactMinus,
    ReactPlus,
    Grounder,
}

impl TemplateId {
    pub const ALL: [TemplateId; 13] = [
        TemplateId::PreviousAction,
        TemplateId::ScreenSummary,
        TemplateId::Progression,
        TemplateId::Mistakes,
        TemplateId::Completion,
        TemplateId::NormalizeGoal,
        TemplateId::ZeroShotMinus,
        TemplateId::ZeroShotPlus,
        TemplateId::CotScMinus,
        TemplateId::CotScPlus,
        TemplateId::ReactMinus,
        TemplateId::ReactPlus,
        TemplateId::Grounder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::PreviousAction => "previous_action",
            TemplateId::ScreenSummary => "screen_summary",
            TemplateId::Progression => "progression",
            TemplateId::Mistakes => "mistakes",
            TemplateId::Completion => "completion",
            TemplateId::NormalizeGoal => "normalize_goal",
            TemplateId::ZeroShotMinus => "zero_shot_minus",
            TemplateId::ZeroShotPlus => "zero_shot_plus",
            TemplateId::CotScMinus => "cot_sc_minus",
            TemplateId::CotScPlus => "cot_sc_plus",
            TemplateId::ReactMinus => "react_minus",
            TemplateId::ReactPlus => "react_plus",
            TemplateId::Grounder => "grounder",
        }
    }

    pub fn template(self) -> &'static PromptTemplate {
        &TEMPLATES[self as usize]
    }
}

/// Screen descriptions substituted for the exemplar placeholders in the
/// chain-of-thought prompts. Generated from the exemplar trees in
/// `assets/exemplars/` by the screen description pipeline.
pub const EXEMPLAR_SCREENS: [&str; 3] = [
    include_str!("../assets/exemplars/example_1_screen.txt"),
    include_str!("../assets/exemplars/example_2_screen.txt"),
    include_str!("../assets/exemplars/example_3_screen.txt"),
];

pub const EXEMPLAR_TREES: [&str; 3] = [
    include_str!("../assets/exemplars/example_1_screen.json"),
    include_str!("../assets/exemplars/example_2_screen.json"),
    include_str!("../assets/exemplars/example_3_screen.json"),
];

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
    pub style: SlotStyle,
    pub slots: &'static [&'static str],
}

fn with_exemplars(raw: &str) -> String {
    let mut text = raw.to_string();
    for (i, screen) in EXEMPLAR_SCREENS.iter().enumerate() {
        text = text.replace(
            &format!("[example_{}_screen_description]", i + 1),
            screen.trim_end_matches('\n'),
        );
    }
    text
}

static TEMPLATES: std::sync::LazyLock<Vec<PromptTemplate>> = std::sync::LazyLock::new(|| {
    let t = |id, raw: &str, style, slots| PromptTemplate {
        id,
        text: raw.to_string(),
        style,
        slots,
    };
    use SlotStyle::*;
    use TemplateId::*;
    vec![
        t(
            PreviousAction,
            include_str!("../assets/prompts/previous_action.txt"),
            Brace,
            &[
                "last_action_commanded",
                "previous_screen_nl_description",
                "screen_nl_description",
            ],
        ),
        t(
            ScreenSummary,
            include_str!("../assets/prompts/screen_summary.txt"),
            Brace,
            &["screen_description", "last_inferred_action"],
        ),
        t(
            Progression,
            include_str!("../assets/prompts/progression.txt"),
            Brace,
            &[
                "inferred_action_history_formatted",
                "screen_summary",
                "screen_description",
            ],
        ),
        t(
            Mistakes,
            include_str!("../assets/prompts/mistakes.txt"),
            Brace,
            &["cleaned_goal", "progress_summary", "screen_description"],
        ),
        t(
            Completion,
            include_str!("../assets/prompts/completion.txt"),
            Brace,
            &[
                "cleaned_goal",
                "inferred_action_history_formatted",
                "screen_summary",
                "possible_action_command",
            ],
        ),
        t(
            NormalizeGoal,
            include_str!("../assets/prompts/normalize_goal.txt"),
            Angle,
            &["original_request"],
        ),
        t(
            ZeroShotMinus,
            include_str!("../assets/prompts/zero_shot_minus.txt"),
            Brace,
            &[
                "goal_clean",
                "formatted_history_of_commanded_actions",
                "screen_description",
            ],
        ),
        t(
            ZeroShotPlus,
            include_str!("../assets/prompts/zero_shot_plus.txt"),
            Brace,
            &[
                "cleaned_goal",
                "progression",
                "mistake_assessment",
                "screen_description",
            ],
        ),
        PromptTemplate {
            id: CotScMinus,
            text: with_exemplars(include_str!("../assets/prompts/cot_sc_minus.txt")),
            style: Brace,
            slots: &[
                "cleaned_goal",
                "formatted_commanded_action_history",
                "screen_description",
            ],
        },
        PromptTemplate {
            id: CotScPlus,
            text: with_exemplars(include_str!("../assets/prompts/cot_sc_plus.txt")),
            style: Brace,
            slots: &[
                "cleaned_goal",
                "progress_summary",
                "mistake_assessment",
                "screen_description",
            ],
        },
        t(
            ReactMinus,
            include_str!("../assets/prompts/react_minus.txt"),
            Brace,
            &[
                "cleaned_goal",
                "observation_thought_action_history",
                "screen_description",
            ],
        ),
        t(
            ReactPlus,
            include_str!("../assets/prompts/react_plus.txt"),
            Brace,
            &[
                "cleaned_goal",
                "progress_summary",
                "mistake_assessment",
                "observation_thought_action_history",
                "screen_description",
            ],
        ),
        t(
            Grounder,
            include_str!("../assets/prompts/grounder.txt"),
            Angle,
            &["SCREEN_REPRESENTATION", "GOAL"],
        ),
    ]
});

impl PromptTemplate {
    /// Substitutes every declared slot. Fails if a declared slot is left
    /// unbound or a binding names an undeclared slot.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
        let map: BTreeMap<&str, &str> = bindings.iter().copied().collect();
        for key in map.keys() {
            if !self.slots.contains(key) {
                return Err(TemplateError::Unknown {
                    template: self.id.name(),
                    slot: key.to_string(),
                });
            }
        }
        if let Some(slot) = self.slots.iter().find(|s| !map.contains_key(**s)) {
            return Err(TemplateError::Unbound {
                template: self.id.name(),
                slot,
            });
        }

        let (open, close) = self.style.delimiters();
        let mut out = String::with_capacity(
            self.text.len() + bindings.iter().map(|(_, v)| v.len()).sum::<usize>(),
        );
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find(open) {
            out.push_str(&rest[..start]);
            let after = &rest[start + open.len_utf8()..];
            match after.find(close) {
                Some(end) if map.contains_key(&after[..end]) => {
                    out.push_str(map[&after[..end]]);
                    rest = &after[end + close.len_utf8()..];
                }
                _ => {
                    out.push(open);
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Slot markers still present in `text` for this template's slots.
    pub fn unbound_markers(&self, text: &str) -> Vec<&'static str> {
        let (open, close) = self.style.delimiters();
        self.slots
            .iter()
            .copied()
            .filter(|s| text.contains(&format!("{open}{s}{close}")))
            .collect()
    }
}

/// Numbered list `1) a\n2) b`, or `empty` when there are no items.
pub fn numbered_list(items: &[String], empty: &str) -> String {
    if items.is_empty() {
        return empty.to_string();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}) {}", i + 1, item))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_declares_exactly_its_markers() {
        for id in TemplateId::ALL {
            let tpl = id.template();
            for slot in tpl.slots {
                let (o, c) = tpl.style.delimiters();
                assert!(
                    tpl.text.contains(&format!("{o}{slot}{c}")),
                    "{} lacks {slot}",
                    id.name()
                );
            }
            assert!(
                !tpl.text.contains("[example_"),
                "{} still has exemplar placeholders",
                id.name()
            );
        }
    }

    #[test]
    fn rendering_binds_all_slots() {
        for id in TemplateId::ALL {
            let tpl = id.template();
            let bindings: Vec<(&str, &str)> = tpl.slots.iter().map(|s| (*s, "VALUE")).collect();
            let out = tpl.render(&bindings).unwrap();
            assert!(tpl.unbound_markers(&out).is_empty(), "{}", id.name());
        }
    }

    #[test]
    fn missing_and_unknown_slots_fail() {
        let tpl = TemplateId::ScreenSummary.template();
        assert!(matches!(
            tpl.render(&[("screen_description", "x")]),
            Err(TemplateError::Unbound {
                slot: "last_inferred_action",
                ..
            })
        ));
        assert!(matches!(
            tpl.render(&[
                ("screen_description", "x"),
                ("last_inferred_action", "y"),
                ("bogus", "z")
            ]),
            Err(TemplateError::Unknown { .. })
        ));
    }

    #[test]
    fn values_are_not_rescanned() {
        let tpl = TemplateId::ScreenSummary.template();
        let out = tpl
            .render(&[
                ("screen_description", "{last_inferred_action}"),
                ("last_inferred_action", "None."),
            ])
            .unwrap();
        assert!(out.contains("Android phone:\n{last_inferred_action}\n"));
    }

    #[test]
    fn grounder_keeps_literal_placeholders() {
        let tpl = TemplateId::Grounder.template();
        let out = tpl
            .render(&[("SCREEN_REPRESENTATION", "S"), ("GOAL", "G")])
            .unwrap();
        assert!(out.contains("<x_coordinate>"));
        assert!(out.contains("User Goal: G\n"));
        assert!(out.ends_with("Answer:\n```json"));
    }

    #[test]
    fn numbered_lists() {
        assert_eq!(numbered_list(&[], "1) None."), "1) None.");
        assert_eq!(numbered_list(&["a".into(), "b".into()], "x"), "1) a\n2) b");
    }
}
