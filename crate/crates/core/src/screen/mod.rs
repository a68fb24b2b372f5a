//! Screen representations derived from accessibility trees.

mod clean;
mod describe;
mod tree;
mod view;

pub use clean::{clean, collapse_containers, prune_invisible};
pub use describe::{
    classify, describe_elements, describe_node, DescriptionLine, ElementKind, ScreenDescription,
    WORDING_VERSION,
};
pub use tree::{
    parse_tree, parse_tree_str, AccessibilityNode, AccessibilityTree, Bounds, ScreenDims,
    DEFAULT_SCREEN_HEIGHT, DEFAULT_SCREEN_WIDTH,
};
pub use view::{grounder_view, GrounderScreenView, ViewElement};

/// Both observation forms derived from one raw tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub description: ScreenDescription,
    pub view: GrounderScreenView,
}

/// Prunes the raw tree, then derives the planner description (from the
/// collapsed tree) and the grounder view (from the pruned tree).
pub fn observe_tree(raw: &AccessibilityTree, dims: ScreenDims) -> Observation {
    let pruned = prune_invisible(raw, dims);
    let collapsed = collapse_containers(&pruned);
    Observation {
        description: describe_elements(&collapsed),
        view: grounder_view(&pruned, dims),
    }
}
