//! Tree cleaning passes applied before a screen is described.

use super::tree::{AccessibilityNode, AccessibilityTree, ScreenDims};

/// Removes every non-root node marked invisible or lying completely off the
/// screen, together with its subtree. Partially visible nodes are kept.
pub fn prune_invisible(tree: &AccessibilityTree, dims: ScreenDims) -> AccessibilityTree {
    fn prune(node: &AccessibilityNode, dims: ScreenDims) -> AccessibilityNode {
        let mut out = node.clone();
        out.children = node
            .children
            .iter()
            .filter(|c| c.visible && !c.bounds.is_off_screen(dims))
            .map(|c| prune(c, dims))
            .collect();
        out
    }
    AccessibilityTree::new(prune(&tree.root, dims))
}

/// Removes container nodes (nodes with children) that carry no text, content
/// description or hint, splicing their children into the nearest retained
/// ancestor in order. Unlabeled leaves and the root are kept.
pub fn collapse_containers(tree: &AccessibilityTree) -> AccessibilityTree {
    fn collapse_children(node: &AccessibilityNode) -> Vec<AccessibilityNode> {
        let mut out = Vec::with_capacity(node.children.len());
        for child in &node.children {
            if !child.is_leaf() && !child.has_label() {
                out.extend(collapse_children(child));
            } else {
                let mut kept = child.clone();
                kept.children = collapse_children(child);
                out.push(kept);
            }
        }
        out
    }
    let mut root = tree.root.clone();
    root.children = collapse_children(&tree.root);
    AccessibilityTree::new(root)
}

/// Both cleaning passes in order.
pub fn clean(tree: &AccessibilityTree, dims: ScreenDims) -> AccessibilityTree {
    collapse_containers(&prune_invisible(tree, dims))
}
