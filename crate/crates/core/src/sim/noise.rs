//! Observation noise, grounding faults and stochastic events.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::screen::{AccessibilityNode, AccessibilityTree};

pub const MISLABEL_CLASS: &str = "android.widget.FrameLayout";

fn check_probability(name: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub p_drop_element: f64,
    pub p_strip_metadata: f64,
    pub p_inject_background: f64,
    pub p_stale_tree: f64,
    pub p_mislabel_type: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        check_probability("p_drop_element", self.p_drop_element)?;
        check_probability("p_strip_metadata", self.p_strip_metadata)?;
        check_probability("p_inject_background", self.p_inject_background)?;
        check_probability("p_stale_tree", self.p_stale_tree)?;
        check_probability("p_mislabel_type", self.p_mislabel_type)
    }

    pub fn is_silent(&self) -> bool {
        [
            self.p_drop_element,
            self.p_strip_metadata,
            self.p_inject_background,
            self.p_stale_tree,
            self.p_mislabel_type,
        ]
        .iter()
        .all(|p| *p == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingFaultModel {
    pub p_noop: f64,
    pub p_wrong_element: f64,
    pub p_wrong_text: f64,
    pub seed: u64,
}

impl GroundingFaultModel {
    pub fn validate(&self) -> Result<(), SimError> {
        check_probability("p_noop", self.p_noop)?;
        check_probability("p_wrong_element", self.p_wrong_element)?;
        check_probability("p_wrong_text", self.p_wrong_text)?;
        let total = self.p_noop + self.p_wrong_element + self.p_wrong_text;
        if total > 1.0 + 1e-12 {
            return Err(SimError::Config(format!(
                "fault probabilities sum to {total} > 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EventModel {
    pub p_popup: f64,
    pub seed: u64,
}

impl EventModel {
    pub fn validate(&self) -> Result<(), SimError> {
        check_probability("p_popup", self.p_popup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannel {
    Stale,
    Drop,
    Strip,
    Mislabel,
    Inject,
}

/// One uniform draw taken while building an observation. `target` is the
/// ground-truth pre-order index (pool index for `Inject`, 0 for `Stale`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub step: usize,
    pub channel: NoiseChannel,
    pub target: usize,
    pub u: f64,
}

/// Applies per-element noise to `truth` in pre-order: drop (root excepted,
/// skipping the subtree's draws), then strip, then mislabel; then one
/// injection draw per background pool entry. Every draw is appended to `log`.
pub fn perturb(
    truth: &AccessibilityTree,
    pool: &[AccessibilityNode],
    model: &NoiseModel,
    rng: &mut ChaCha8Rng,
    step: usize,
    log: &mut Vec<NoiseDraw>,
) -> AccessibilityTree {
    let mut draw = |channel, target| {
        let u: f64 = rng.gen();
        log.push(NoiseDraw {
            step,
            channel,
            target,
            u,
        });
        u
    };
    let root =
        perturb_node(&truth.root, 0, &mut 0, model, &mut draw).expect("root is never dropped");
    let mut tree = AccessibilityTree::new(root);
    for (i, node) in pool.iter().enumerate() {
        if draw(NoiseChannel::Inject, i) < model.p_inject_background {
            tree.root.children.push(node.clone());
        }
    }
    tree
}

fn perturb_node(
    node: &AccessibilityNode,
    depth: usize,
    index: &mut usize,
    model: &NoiseModel,
    draw: &mut impl FnMut(NoiseChannel, usize) -> f64,
) -> Option<AccessibilityNode> {
    let me = *index;
    *index += 1;
    let skip_subtree = |index: &mut usize| *index += node.node_count() - 1;
    let mut out = node.clone();
    if depth > 0 {
        if draw(NoiseChannel::Drop, me) < model.p_drop_element {
            skip_subtree(index);
            return None;
        }
        if draw(NoiseChannel::Strip, me) < model.p_strip_metadata {
            out.text = None;
            out.content_description = None;
            out.hint_text = None;
        }
        if draw(NoiseChannel::Mislabel, me) < model.p_mislabel_type {
            out.class_name = MISLABEL_CLASS.to_string();
        }
    }
    out.children = node
        .children
        .iter()
        .filter_map(|c| perturb_node(c, depth + 1, index, model, draw))
        .collect();
    Some(out)
}

/// Re-applies a recorded draw sequence to `truth` without any RNG. Used to
/// check that observations are a pure function of the logged draws.
pub fn replay_draws(
    truth: &AccessibilityTree,
    pool: &[AccessibilityNode],
    model: &NoiseModel,
    draws: &[NoiseDraw],
) -> Option<AccessibilityTree> {
    let mut it = draws.iter();
    let mut ok = true;
    let mut next = |channel: NoiseChannel, target: usize| match it.next() {
        Some(d) if d.channel == channel && d.target == target => d.u,
        _ => {
            ok = false;
            1.0
        }
    };
    let root = perturb_node(&truth.root, 0, &mut 0, model, &mut next)?;
    let mut tree = AccessibilityTree::new(root);
    for (i, node) in pool.iter().enumerate() {
        if next(NoiseChannel::Inject, i) < model.p_inject_background {
            tree.root.children.push(node.clone());
        }
    }
    (ok && it.next().is_none()).then_some(tree)
}

/// Whether every element of `emitted` is a (possibly stripped or mislabeled)
/// ground-truth element at the same position, or a whole pool entry appended
/// to the root.
pub fn is_sound(
    emitted: &AccessibilityTree,
    truth: &AccessibilityTree,
    pool: &[AccessibilityNode],
) -> bool {
    fn same_element(e: &AccessibilityNode, t: &AccessibilityNode) -> bool {
        let class_ok = e.class_name == t.class_name || e.class_name == MISLABEL_CLASS;
        let stripped = e.text.is_none() && e.content_description.is_none() && e.hint_text.is_none();
        let labels_ok = stripped
            || (e.text == t.text
                && e.content_description == t.content_description
                && e.hint_text == t.hint_text);
        class_ok
            && labels_ok
            && e.bounds == t.bounds
            && e.package == t.package
            && e.checked == t.checked
            && e.visible == t.visible
    }
    // emitted children must be an order-preserving subsequence of truth children
    fn subtree_ok(e: &AccessibilityNode, t: &AccessibilityNode) -> bool {
        if !same_element(e, t) {
            return false;
        }
        let mut candidates = t.children.iter();
        e.children
            .iter()
            .all(|ec| candidates.by_ref().any(|tc| subtree_ok(ec, tc)))
    }
    let root = &emitted.root;
    let t = &truth.root;
    if root.class_name != t.class_name || root.bounds != t.bounds || root.package != t.package {
        return false;
    }
    let mut candidates = t.children.iter();
    let mut children = root.children.iter().peekable();
    while let Some(ec) = children.peek() {
        if candidates.by_ref().any(|tc| subtree_ok(ec, tc)) {
            children.next();
        } else {
            break;
        }
    }
    children.all(|ec| pool.contains(ec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screen::{parse_tree, Bounds};
    use rand::SeedableRng;
    use serde_json::json;

    fn truth() -> AccessibilityTree {
        parse_tree(&json!({"class": "Root", "bounds": [0, 0, 1080, 2400], "children": [
            {"class": "android.widget.TextView", "text": "Title", "bounds": [0, 0, 1080, 200]},
            {"class": "List", "bounds": [0, 200, 1080, 2400], "children": [
                {"class": "android.widget.Button", "text": "A", "bounds": [0, 200, 1080, 400]},
                {"class": "android.widget.Switch", "text": "B", "checked": true, "bounds": [0, 400, 1080, 600]}
            ]}
        ]}))
        .unwrap()
    }

    fn pool() -> Vec<AccessibilityNode> {
        vec![
            AccessibilityNode::new("android.widget.Button", "bg", Bounds::new(0, 0, 10, 10))
                .with_text("Behind"),
        ]
    }

    fn model(p: f64) -> NoiseModel {
        NoiseModel {
            p_drop_element: p,
            p_strip_metadata: p,
            p_inject_background: p,
            p_stale_tree: 0.0,
            p_mislabel_type: p,
            seed: 0,
        }
    }

    #[test]
    fn silent_model_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut log = Vec::new();
        let out = perturb(&truth(), &pool(), &model(0.0), &mut rng, 0, &mut log);
        assert_eq!(out, truth());
        assert_eq!(log.len(), 4 * 3 + 1);
    }

    #[test]
    fn forced_strip_keeps_structure() {
        let m = NoiseModel {
            p_strip_metadata: 1.0,
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = perturb(&truth(), &[], &m, &mut rng, 0, &mut Vec::new());
        assert_eq!(out.root.node_count(), truth().root.node_count());
        assert!(out.root.preorder().iter().all(|n| !n.has_label()));
        assert!(is_sound(&out, &truth(), &[]));
    }

    #[test]
    fn forced_drop_removes_all_but_root() {
        let m = NoiseModel {
            p_drop_element: 1.0,
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut log = Vec::new();
        let out = perturb(&truth(), &[], &m, &mut rng, 0, &mut log);
        assert!(out.root.children.is_empty());
        // dropped subtrees consume no further draws
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn draws_replay_to_the_same_tree() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut log = Vec::new();
            let out = perturb(&truth(), &pool(), &model(0.4), &mut rng, 0, &mut log);
            assert_eq!(
                replay_draws(&truth(), &pool(), &model(0.4), &log),
                Some(out.clone())
            );
            assert!(is_sound(&out, &truth(), &pool()));
        }
    }

    #[test]
    fn fabricated_elements_are_unsound() {
        let mut bad = truth();
        bad.root.children[0].text = Some("Invented".into());
        assert!(!is_sound(&bad, &truth(), &pool()));
        let mut extra = truth();
        extra
            .root
            .children
            .push(AccessibilityNode::new("X", "", Bounds::new(0, 0, 1, 1)));
        assert!(!is_sound(&extra, &truth(), &pool()));
        let mut injected = truth();
        injected.root.children.push(pool()[0].clone());
        assert!(is_sound(&injected, &truth(), &pool()));
    }

    #[test]
    fn probability_validation() {
        assert!(model(1.5).validate().is_err());
        let f = GroundingFaultModel {
            p_noop: 0.5,
            p_wrong_element: 0.4,
            p_wrong_text: 0.2,
            seed: 0,
        };
        assert!(f.validate().is_err());
    }
}
