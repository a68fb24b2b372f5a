//! Instantiation of screen templates into accessibility trees, the
//! launcher screen, and hit testing.

use std::collections::BTreeMap;

use super::spec::{
    truthy, AppSpec, Layout, NodeTemplate, ScreenSpec, LAUNCHER_APP, LAUNCHER_PACKAGE,
};
use crate::screen::{AccessibilityNode, AccessibilityTree, Bounds, ScreenDims};

/// A rendered screen: the tree plus each node's transition key, in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedScreen {
    pub tree: AccessibilityTree,
    pub keys: Vec<Option<String>>,
}

/// Replaces `{name}` with the variable's value. Unknown names are kept verbatim.
pub fn substitute(text: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if vars.contains_key(&after[..end]) => {
                out.push_str(&vars[&after[..end]]);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn split(bounds: Bounds, layout: Layout, index: usize, count: usize) -> Bounds {
    let count = count.max(1) as i64;
    let i = index as i64;
    let cut = |lo: i32, hi: i32, k: i64| lo + ((hi - lo) as i64 * k / count) as i32;
    match layout {
        Layout::Column => Bounds::new(
            bounds.left,
            cut(bounds.top, bounds.bottom, i),
            bounds.right,
            cut(bounds.top, bounds.bottom, i + 1),
        ),
        Layout::Row => Bounds::new(
            cut(bounds.left, bounds.right, i),
            bounds.top,
            cut(bounds.left, bounds.right, i + 1),
            bounds.bottom,
        ),
    }
}

fn shown(t: &NodeTemplate, vars: &BTreeMap<String, String>) -> bool {
    t.show_if
        .as_ref()
        .is_none_or(|v| vars.get(v).is_some_and(|x| truthy(x)))
}

fn instantiate(
    t: &NodeTemplate,
    bounds: Bounds,
    package: &str,
    vars: &BTreeMap<String, String>,
    keys: &mut Vec<Option<String>>,
) -> AccessibilityNode {
    let sub = |s: &Option<String>| s.as_ref().map(|s| substitute(s, vars));
    let mut node = AccessibilityNode::new(
        t.class_name.clone(),
        t.package.clone().unwrap_or_else(|| package.to_string()),
        bounds,
    );
    node.text = sub(&t.text);
    node.content_description = sub(&t.content_desc);
    node.hint_text = sub(&t.hint);
    node.visible = t.visible;
    node.checked = match &t.checked_var {
        Some(v) => Some(vars.get(v).is_some_and(|x| truthy(x))),
        None => t.checked,
    };
    keys.push(t.key.clone().or_else(|| node.label().map(str::to_string)));

    let visible: Vec<&NodeTemplate> = t.children.iter().filter(|c| shown(c, vars)).collect();
    let auto = visible.iter().filter(|c| c.bounds.is_none()).count();
    let mut slot = 0;
    for child in visible {
        let b = match child.bounds {
            Some(b) => b,
            None => {
                slot += 1;
                split(bounds, t.layout, slot - 1, auto)
            }
        };
        let c = instantiate(child, b, package, vars, keys);
        node.children.push(c);
    }
    node
}

/// Renders a screen template against the current variables.
pub fn render_screen(
    screen: &ScreenSpec,
    package: &str,
    vars: &BTreeMap<String, String>,
    dims: ScreenDims,
) -> RenderedScreen {
    let mut keys = Vec::new();
    let bounds = screen.root.bounds.unwrap_or(Bounds::full_screen(dims));
    let root = instantiate(&screen.root, bounds, package, vars, &mut keys);
    RenderedScreen {
        tree: AccessibilityTree::new(root),
        keys,
    }
}

/// Background pool entries as concrete nodes.
pub fn render_background(
    screen: &ScreenSpec,
    package: &str,
    vars: &BTreeMap<String, String>,
) -> Vec<AccessibilityNode> {
    screen
        .background
        .iter()
        .map(|t| {
            let mut keys = Vec::new();
            instantiate(t, t.bounds.unwrap_or_default(), package, vars, &mut keys)
        })
        .collect()
}

/// Pre-order index of the element a tap at (x, y) lands on: the deepest
/// containing node, later siblings drawn on top. `None` if nothing, not even
/// the root, contains the point.
pub fn hit_test(tree: &AccessibilityTree, x: i32, y: i32) -> Option<Vec<usize>> {
    // returns the chain of pre-order indices from the root to the hit node
    fn walk(
        node: &AccessibilityNode,
        x: i32,
        y: i32,
        index: &mut usize,
        chain: &mut Vec<usize>,
    ) -> bool {
        let me = *index;
        *index += 1;
        let inside = node.visible && node.bounds.contains(x, y);
        let mut best: Option<Vec<usize>> = None;
        for child in &node.children {
            let mut sub = Vec::new();
            if walk(child, x, y, index, &mut sub) {
                best = Some(sub);
            }
        }
        match (inside, best) {
            (_, Some(sub)) if inside => {
                chain.push(me);
                chain.extend(sub);
                true
            }
            (true, None) => {
                chain.push(me);
                true
            }
            _ => false,
        }
    }
    let mut chain = Vec::new();
    let mut index = 0;
    walk(&tree.root, x, y, &mut index, &mut chain).then_some(chain)
}

pub const HOME_SCREEN_ID: &str = "main";

/// Launcher with a fixed dock and one icon per app.
pub fn launcher_app(apps: &[AppSpec]) -> AppSpec {
    let text_view = |text: &str, b: Bounds| {
        let mut t = NodeTemplate::new("android.widget.TextView");
        t.text = Some(text.to_string());
        t.bounds = Some(b);
        t
    };
    let mut root = NodeTemplate::new("android.widget.FrameLayout");
    root.children
        .push(text_view("Home", Bounds::new(0, 128, 1080, 2337)));
    let dock = [
        ("Phone", 76, 249),
        ("Messages", 328, 501),
        ("Chrome", 580, 752),
    ];
    for (name, l, r) in dock {
        root.children
            .push(text_view(name, Bounds::new(l, 1873, r, 2068)));
    }
    for (i, app) in apps.iter().enumerate() {
        let (row, col) = (i / 4, (i % 4) as i32);
        let top = 1600 - 252 * row as i32;
        let left = 76 + 252 * col;
        root.children.push(text_view(
            &app.display_name,
            Bounds::new(left, top, left + 173, top + 195),
        ));
    }
    AppSpec {
        name: LAUNCHER_APP.into(),
        display_name: "Home".into(),
        package: LAUNCHER_PACKAGE.into(),
        start: HOME_SCREEN_ID.into(),
        vars: BTreeMap::new(),
        screens: [(
            HOME_SCREEN_ID.to_string(),
            ScreenSpec {
                root,
                background: Vec::new(),
            },
        )]
        .into_iter()
        .collect(),
        transitions: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn substitution_keeps_unknown_names() {
        let v = vars(&[("time", "6:00 AM")]);
        assert_eq!(
            substitute("Alarm {time} {other}", &v),
            "Alarm 6:00 AM {other}"
        );
        assert_eq!(substitute("{", &v), "{");
    }

    #[test]
    fn auto_layout_and_bindings() {
        let screen: ScreenSpec = serde_json::from_value(json!({"root": {"class": "Root", "children": [
            {"class": "android.widget.TextView", "text": "Title"},
            {"class": "android.widget.Switch", "text": "Dark", "checked_var": "dark", "key": "dark_switch"},
            {"class": "android.widget.TextView", "text": "Hidden", "show_if": "show"},
            {"class": "Row", "layout": "row", "children": [
                {"class": "android.widget.Button", "text": "A"},
                {"class": "android.widget.Button", "text": "B"}
            ]}
        ]}}))
        .unwrap();
        let r = render_screen(
            &screen,
            "pkg",
            &vars(&[("dark", "true")]),
            ScreenDims::default(),
        );
        let root = &r.tree.root;
        assert_eq!(root.children.len(), 3);
        assert_eq!(root.children[0].bounds, Bounds::new(0, 0, 1080, 800));
        assert_eq!(root.children[1].checked, Some(true));
        assert_eq!(
            root.children[2].children[1].bounds,
            Bounds::new(540, 1600, 1080, 2400)
        );
        assert_eq!(root.children[2].package, "pkg");
        assert_eq!(
            r.keys,
            vec![
                None,
                Some("Title".into()),
                Some("dark_switch".into()),
                None,
                Some("A".into()),
                Some("B".into())
            ]
        );
    }

    #[test]
    fn hit_test_prefers_deepest_then_topmost() {
        let screen: ScreenSpec =
            serde_json::from_value(json!({"root": {"class": "Root", "children": [
                {"class": "Big", "bounds": [0, 0, 1080, 2400]},
                {"class": "Box", "bounds": [0, 0, 500, 500], "children": [
                    {"class": "Btn", "bounds": [100, 100, 200, 200]}
                ]}
            ]}}))
            .unwrap();
        let r = render_screen(&screen, "p", &BTreeMap::new(), ScreenDims::default());
        assert_eq!(hit_test(&r.tree, 150, 150), Some(vec![0, 2, 3]));
        assert_eq!(hit_test(&r.tree, 300, 300), Some(vec![0, 2]));
        assert_eq!(hit_test(&r.tree, 900, 900), Some(vec![0, 1]));
        assert_eq!(hit_test(&r.tree, 5000, 10), None);
    }

    #[test]
    fn launcher_dock_geometry() {
        let app = launcher_app(&[]);
        let r = render_screen(
            &app.screens[HOME_SCREEN_ID],
            LAUNCHER_PACKAGE,
            &BTreeMap::new(),
            ScreenDims::default(),
        );
        let centers: Vec<(i32, i32)> = r
            .tree
            .root
            .children
            .iter()
            .map(|c| c.bounds.center())
            .collect();
        assert_eq!(
            centers,
            vec![(540, 1232), (162, 1970), (414, 1970), (666, 1970)]
        );
        // a tap on the Phone icon lands on the icon, not on the full-screen Home label
        assert_eq!(hit_test(&r.tree, 162, 1970), Some(vec![0, 2]));
    }
}
