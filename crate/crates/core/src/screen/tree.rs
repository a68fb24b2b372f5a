//! Accessibility tree model and its JSON wire format.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ParseError;

pub const DEFAULT_SCREEN_WIDTH: i32 = 1080;
pub const DEFAULT_SCREEN_HEIGHT: i32 = 2400;

/// Screen dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: i32,
    pub height: i32,
}

impl Default for ScreenDims {
    fn default() -> Self {
        Self {
            width: DEFAULT_SCREEN_WIDTH,
            height: DEFAULT_SCREEN_HEIGHT,
        }
    }
}

/// Pixel rectangle `[left, top, right, bottom]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl From<[i32; 4]> for Bounds {
    fn from([left, top, right, bottom]: [i32; 4]) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }
}

impl From<Bounds> for [i32; 4] {
    fn from(b: Bounds) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn full_screen(dims: ScreenDims) -> Self {
        Self::new(0, 0, dims.width, dims.height)
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    /// Integer midpoint, rounding toward negative infinity.
    pub fn center(&self) -> (i32, i32) {
        (
            (self.left + self.right).div_euclid(2),
            (self.top + self.bottom).div_euclid(2),
        )
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    /// True when no pixel of the rectangle lies on the screen.
    pub fn is_off_screen(&self, dims: ScreenDims) -> bool {
        self.right <= 0 || self.bottom <= 0 || self.left >= dims.width || self.top >= dims.height
    }

    pub fn clip(&self, dims: ScreenDims) -> Bounds {
        Bounds::new(
            self.left.clamp(0, dims.width),
            self.top.clamp(0, dims.height),
            self.right.clamp(0, dims.width),
            self.bottom.clamp(0, dims.height),
        )
    }
}

/// One UI element as exposed by the platform accessibility layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessibilityNode {
    #[serde(rename = "class", default)]
    pub class_name: String,
    #[serde(default)]
    pub package: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(
        rename = "content_desc",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub content_description: Option<String>,
    #[serde(rename = "hint", default, skip_serializing_if = "Option::is_none")]
    pub hint_text: Option<String>,
    #[serde(default = "default_visible")]
    pub visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked: Option<bool>,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub children: Vec<AccessibilityNode>,
}

fn default_visible() -> bool {
    true
}

impl AccessibilityNode {
    pub fn new(class_name: impl Into<String>, package: impl Into<String>, bounds: Bounds) -> Self {
        Self {
            class_name: class_name.into(),
            package: package.into(),
            text: None,
            content_description: None,
            hint_text: None,
            visible: true,
            checked: None,
            bounds,
            children: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_children(mut self, children: Vec<AccessibilityNode>) -> Self {
        self.children = children;
        self
    }

    /// True when any of text, content description or hint carries non-empty text.
    pub fn has_label(&self) -> bool {
        [&self.text, &self.content_description, &self.hint_text]
            .iter()
            .any(|v| v.as_deref().is_some_and(|s| !s.is_empty()))
    }

    /// The most descriptive available label: text, then content description, then hint.
    pub fn label(&self) -> Option<&str> {
        [&self.text, &self.content_description, &self.hint_text]
            .into_iter()
            .filter_map(|v| v.as_deref())
            .find(|s| !s.is_empty())
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal including `self`.
    pub fn preorder(&self) -> Vec<&AccessibilityNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(|c| c.leaf_count()).sum()
        }
    }
}

/// A screen's element hierarchy. The root is the window container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccessibilityTree {
    pub root: AccessibilityNode,
}

impl AccessibilityTree {
    pub fn new(root: AccessibilityNode) -> Self {
        Self { root }
    }

    /// A tree holding only an empty full-screen root container.
    pub fn bare(dims: ScreenDims) -> Self {
        Self::new(AccessibilityNode::new(
            "android.widget.FrameLayout",
            "",
            Bounds::full_screen(dims),
        ))
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("tree serialization cannot fail")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }
}

/// Parses a tree document, reporting the JSON path of the first offending field.
pub fn parse_tree(document: &Value) -> Result<AccessibilityTree, ParseError> {
    let root = parse_node(document, "$", 0)?;
    Ok(AccessibilityTree::new(root))
}

pub fn parse_tree_str(text: &str) -> Result<AccessibilityTree, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Json {
        path: "$".into(),
        message: e.to_string(),
    })?;
    parse_tree(&value)
}

// Documents are decoded from `serde_json::Value`, which is always finite, so
// cycles cannot be expressed; the depth cap rejects pathological nesting.
const MAX_DEPTH: usize = 256;

fn parse_node(value: &Value, path: &str, depth: usize) -> Result<AccessibilityNode, ParseError> {
    if depth > MAX_DEPTH {
        return Err(ParseError::Structure {
            path: path.into(),
            message: format!("nesting deeper than {MAX_DEPTH} levels"),
        });
    }
    let obj = value.as_object().ok_or_else(|| ParseError::Schema {
        path: path.into(),
        message: "expected an object".into(),
    })?;

    let string_field = |key: &str| -> Result<Option<String>, ParseError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ParseError::Schema {
                path: format!("{path}.{key}"),
                message: "expected a string".into(),
            }),
        }
    };
    let bool_field = |key: &str| -> Result<Option<bool>, ParseError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(ParseError::Schema {
                path: format!("{path}.{key}"),
                message: "expected a boolean".into(),
            }),
        }
    };

    let bounds = match obj.get("bounds") {
        None | Some(Value::Null) => Bounds::default(),
        Some(Value::Array(items)) if items.len() == 4 => {
            let mut coords = [0i32; 4];
            for (i, item) in items.iter().enumerate() {
                coords[i] = item
                    .as_i64()
                    .and_then(|v| i32::try_from(v).ok())
                    .ok_or_else(|| ParseError::Schema {
                        path: format!("{path}.bounds[{i}]"),
                        message: "expected an integer".into(),
                    })?;
            }
            let b = Bounds::from(coords);
            if b.left > b.right || b.top > b.bottom {
                return Err(ParseError::Schema {
                    path: format!("{path}.bounds"),
                    message: format!("inverted rectangle {coords:?}"),
                });
            }
            b
        }
        Some(_) => {
            return Err(ParseError::Schema {
                path: format!("{path}.bounds"),
                message: "expected [left, top, right, bottom]".into(),
            })
        }
    };

    let children = match obj.get("children") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, child)| parse_node(child, &format!("{path}.children[{i}]"), depth + 1))
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(ParseError::Schema {
                path: format!("{path}.children"),
                message: "expected an array".into(),
            })
        }
    };

    Ok(AccessibilityNode {
        class_name: string_field("class")?.unwrap_or_default(),
        package: string_field("package")?.unwrap_or_default(),
        text: string_field("text")?,
        content_description: string_field("content_desc")?,
        hint_text: string_field("hint")?,
        visible: bool_field("visible")?.unwrap_or(true),
        checked: bool_field("checked")?,
        bounds,
        children,
    })
}
