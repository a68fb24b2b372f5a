//! Natural-language element lists used as the planner's observation.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::{AccessibilityNode, AccessibilityTree};

/// Wording table version. Bump when any template below changes.
pub const WORDING_VERSION: u32 = 1;

const INDENT: &str = "  ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionLine {
    pub depth: usize,
    pub text: String,
}

/// Hierarchical list of element descriptions, one per line, indented by depth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScreenDescription {
    pub lines: Vec<DescriptionLine>,
}

impl ScreenDescription {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    /// Renders the description as the text block placed in prompts.
    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Checks the structural invariants: non-empty lines and no depth jumps.
    pub fn is_well_formed(&self) -> bool {
        let mut prev: Option<usize> = None;
        for line in &self.lines {
            if line.text.is_empty() {
                return false;
            }
            let max = prev.map_or(0, |d| d + 1);
            if line.depth > max {
                return false;
            }
            prev = Some(line.depth);
        }
        true
    }
}

impl fmt::Display for ScreenDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, line) in self.lines.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            for _ in 0..line.depth {
                f.write_str(INDENT)?;
            }
            f.write_str(&line.text)?;
        }
        Ok(())
    }
}

/// Element type recognized from the class name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    TextBox,
    RadioButton,
    CheckBox,
    Switch,
    WebView,
    Button,
    Image,
    Tab,
    Generic,
}

// Case-insensitive substring match, most specific keyword first so that
// "RadioButton" is not classified as a plain button.
const KIND_TABLE: &[(&str, ElementKind)] = &[
    ("edittext", ElementKind::TextBox),
    ("radiobutton", ElementKind::RadioButton),
    ("checkbox", ElementKind::CheckBox),
    ("switch", ElementKind::Switch),
    ("webview", ElementKind::WebView),
    ("button", ElementKind::Button),
    ("image", ElementKind::Image),
    ("tab", ElementKind::Tab),
];

pub fn classify(class_name: &str) -> ElementKind {
    let lower = class_name.to_ascii_lowercase();
    KIND_TABLE
        .iter()
        .find(|(kw, _)| lower.contains(kw))
        .map_or(ElementKind::Generic, |(_, kind)| *kind)
}

fn quoted(label: &str) -> String {
    format!("\"{label}\"")
}

/// Describes a single element according to the wording table.
pub fn describe_node(node: &AccessibilityNode) -> String {
    let label = node.label();
    let with_text = |noun: &str| match label {
        Some(l) => format!("{noun} with the text {}", quoted(l)),
        None => noun.to_string(),
    };
    match classify(&node.class_name) {
        ElementKind::TextBox => match (&node.text, &node.hint_text, &node.content_description) {
            (Some(t), _, _) if !t.is_empty() => format!("a text box with the text {}", quoted(t)),
            (_, Some(h), _) if !h.is_empty() => format!("a text box with the hint {}", quoted(h)),
            (_, _, Some(d)) if !d.is_empty() => {
                format!("a text box with the description {}", quoted(d))
            }
            _ => "an empty text box".to_string(),
        },
        ElementKind::Button => with_text("a button"),
        ElementKind::CheckBox => {
            let state = match node.checked {
                Some(true) => " that is checked",
                Some(false) => " that is not checked",
                None => "",
            };
            format!("{}{state}", with_text("a check box"))
        }
        ElementKind::RadioButton => {
            let state = match node.checked {
                Some(true) => " that is selected",
                Some(false) => " that is not selected",
                None => "",
            };
            format!("{}{state}", with_text("a radio button"))
        }
        ElementKind::Switch => {
            let state = match node.checked {
                Some(true) => " that is on",
                Some(false) => " that is off",
                None => "",
            };
            format!("{}{state}", with_text("a switch"))
        }
        ElementKind::Image => match label {
            Some(l) => format!("an image with the description {}", quoted(l)),
            None => "an image".to_string(),
        },
        ElementKind::Tab => {
            let state = if node.checked == Some(true) {
                " that is selected"
            } else {
                ""
            };
            format!("{}{state}", with_text("a tab"))
        }
        ElementKind::WebView => with_text("a web view"),
        ElementKind::Generic => {
            let mut out = format!("an element of class {}", quoted(&node.class_name));
            if !node.package.is_empty() {
                out.push_str(&format!(" from package {}", quoted(&node.package)));
            }
            if let Some(l) = label {
                out.push_str(&format!(" with the text {}", quoted(l)));
            }
            match node.checked {
                Some(true) => out.push_str(" that is selected"),
                Some(false) => out.push_str(" that is not selected"),
                None => {}
            }
            out
        }
    }
}

/// One line per descendant of the root, in pre-order; the root window
/// container itself is not described. Depth 0 is a child of the root.
pub fn describe_elements(tree: &AccessibilityTree) -> ScreenDescription {
    fn walk(node: &AccessibilityNode, depth: usize, out: &mut Vec<DescriptionLine>) {
        out.push(DescriptionLine {
            depth,
            text: describe_node(node),
        });
        for child in &node.children {
            walk(child, depth + 1, out);
        }
    }
    let mut lines = Vec::new();
    for child in &tree.root.children {
        walk(child, 0, &mut lines);
    }
    ScreenDescription { lines }
}
