//! Leaf-node coordinate view consumed by the grounder.

use serde::{Deserialize, Serialize};

use super::tree::{AccessibilityNode, AccessibilityTree, ScreenDims};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewElement {
    pub text: String,
    pub center: (i32, i32),
    pub size: (i32, i32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrounderScreenView {
    pub elements: Vec<ViewElement>,
    pub screen_dims: ScreenDims,
}

impl GrounderScreenView {
    pub fn empty(screen_dims: ScreenDims) -> Self {
        Self {
            elements: Vec::new(),
            screen_dims,
        }
    }

    /// Serializes as `{"UI elements": [{"text": ..., "center": [x, y], "size": [w, h]}, ...]}`.
    pub fn to_prompt_json(&self) -> String {
        let items: Vec<String> = self
            .elements
            .iter()
            .map(|e| {
                format!(
                    "{{\"text\": {}, \"center\": [{}, {}], \"size\": [{}, {}]}}",
                    serde_json::to_string(&e.text).expect("string serialization"),
                    e.center.0,
                    e.center.1,
                    e.size.0,
                    e.size.1
                )
            })
            .collect();
        format!("{{\"UI elements\": [{}]}}", items.join(", "))
    }
}

/// Extracts leaf nodes in pre-order with their label, center and size.
/// Bounds are clipped to the screen first; sizes are at least one pixel.
pub fn grounder_view(tree: &AccessibilityTree, dims: ScreenDims) -> GrounderScreenView {
    fn walk(node: &AccessibilityNode, dims: ScreenDims, out: &mut Vec<ViewElement>) {
        if node.is_leaf() {
            let b = node.bounds.clip(dims);
            out.push(ViewElement {
                text: node.label().unwrap_or("").to_string(),
                center: b.center(),
                size: (b.width().max(1), b.height().max(1)),
            });
        }
        for child in &node.children {
            walk(child, dims, out);
        }
    }
    let mut elements = Vec::new();
    walk(&tree.root, dims, &mut elements);
    GrounderScreenView {
        elements,
        screen_dims: dims,
    }
}
