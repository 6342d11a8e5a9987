//! Control-only model tree.
//!
//! The tree is grown on control units only. Each node picks the threshold that
//! maximizes standard deviation reduction of the outcome, fits linear models on
//! the two resulting children, and keeps the split only if at least one child
//! improves the parent's adjusted R² by more than the small-child penalty.
//! Treated units are routed to leaves afterwards and never influence the shape.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::stats::{self, LinearFit};

pub type NodeId = usize;

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_MAX_DEPTH: usize = 32;

/// Minimum child size below which the adjusted-R² gain is penalized.
pub fn default_theta(p: usize) -> usize {
    30.max(2 * p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub lambda: f64,
    /// Overrides `max(30, 2p)` when set.
    pub theta: Option<usize>,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            theta: None,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// Best threshold found by [`best_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub sdr: f64,
}

/// Everything needed to re-check an accepted split after the fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub feature: usize,
    pub threshold: f64,
    pub sdr: f64,
    pub parent_r2_adj: Option<f64>,
    pub left_r2_adj: Option<f64>,
    pub right_r2_adj: Option<f64>,
    pub left_n: usize,
    pub right_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub split: Option<SplitRecord>,
    pub children: Option<(NodeId, NodeId)>,
    pub leaf_model: Option<LinearFit>,
    /// Dataset row indices of the control units reaching this node.
    pub control_rows: Vec<usize>,
    pub r2_adj: Option<f64>,
    pub depth: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub root: NodeId,
    pub lambda: f64,
    pub theta: usize,
    pub feature_count: usize,
    pub feature_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// `σ(P) - |L|/|P| σ(L) - |R|/|P| σ(R)` with population standard deviations.
pub fn sdr(parent: &[f64], left: &[f64], right: &[f64]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    if left.len() + right.len() != parent.len() {
        return Err(Error::ShapeMismatch(format!(
            "children hold {} + {} values, parent {}",
            left.len(),
            right.len(),
            parent.len()
        )));
    }
    let n = parent.len() as f64;
    Ok(stats::std_dev(parent)?
        - left.len() as f64 / n * stats::std_dev(left)?
        - right.len() as f64 / n * stats::std_dev(right)?)
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (v - self.mean);
    }

    fn pop_sd(&self) -> f64 {
        libm::sqrt((self.m2 / self.n).max(0.0))
    }
}

/// Scans every feature and every observed value as a `x <= s` threshold and
/// returns the SDR maximizer. Ties keep the lower feature index, then the
/// lower threshold. The largest observed value is never a candidate since it
/// would leave the right child empty.
pub fn best_split(d: &Dataset, rows: &[usize]) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mut whole = Moments::default();
    rows.iter().for_each(|&r| whole.push(d.y(r)));
    let sd_parent = whole.pop_sd();

    let mut best: Option<SplitCandidate> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut suffix: Vec<Moments> = Vec::with_capacity(n + 1);
    for j in 0..d.feature_count() {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (d.value(r, j), d.y(r))));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        suffix.clear();
        suffix.resize(n + 1, Moments::default());
        for i in (0..n).rev() {
            let mut m = suffix[i + 1];
            m.push(pairs[i].1);
            suffix[i] = m;
        }
        let mut left = Moments::default();
        for i in 0..n - 1 {
            left.push(pairs[i].1);
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right = &suffix[i + 1];
            let value = sd_parent - left.n / nf * left.pop_sd() - right.n / nf * right.pop_sd();
            if best.map_or(true, |b| value > b.sdr) {
                best = Some(SplitCandidate {
                    feature: j,
                    threshold: pairs[i].0,
                    sdr: value,
                });
            }
        }
    }
    best
}

/// Split acceptance rule: a child justifies the split when its adjusted R²
/// beats the parent's by more than `lambda`, the penalty applying only when the
/// child holds fewer than `theta` units. Undefined adjusted R² counts as -∞.
pub fn should_split(
    parent: &LinearFit,
    left: &LinearFit,
    right: &LinearFit,
    left_n: usize,
    right_n: usize,
    lambda: f64,
    theta: usize,
) -> bool {
    split_accepted(
        parent.r2_adj,
        left.r2_adj,
        right.r2_adj,
        left_n,
        right_n,
        lambda,
        theta,
    )
}

/// [`should_split`] on raw adjusted-R² values, for re-checking stored records.
pub fn split_accepted(
    parent: Option<f64>,
    left: Option<f64>,
    right: Option<f64>,
    left_n: usize,
    right_n: usize,
    lambda: f64,
    theta: usize,
) -> bool {
    let parent = parent.unwrap_or(f64::NEG_INFINITY);
    let gain = |child: Option<f64>, n: usize| {
        let penalty = if theta > n { lambda } else { 0.0 };
        child.unwrap_or(f64::NEG_INFINITY) - parent - penalty > 0.0
    };
    gain(left, left_n) || gain(right, right_n)
}

struct Builder<'a> {
    data: &'a Dataset,
    lambda: f64,
    theta: usize,
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn fit(&self, rows: &[usize]) -> Result<LinearFit> {
        stats::ols_fit_rows(self.data, rows)
    }

    fn grow(&mut self, rows: Vec<usize>, fit: LinearFit, depth: usize) -> Result<NodeId> {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            split: None,
            children: None,
            leaf_model: None,
            control_rows: Vec::new(),
            r2_adj: fit.r2_adj,
            depth,
        });
        let p = self.data.feature_count();

        let accepted = if depth >= self.max_depth {
            None
        } else {
            self.try_split(&rows, &fit, p)?
        };

        match accepted {
            Some((record, left, right, left_fit, right_fit)) => {
                let l = self.grow(left, left_fit, depth + 1)?;
                let r = self.grow(right, right_fit, depth + 1)?;
                let node = &mut self.nodes[id];
                node.split = Some(record);
                node.children = Some((l, r));
                node.control_rows = rows;
            }
            None => {
                let node = &mut self.nodes[id];
                node.leaf_model = Some(fit);
                node.control_rows = rows;
            }
        }
        Ok(id)
    }

    #[allow(clippy::type_complexity)]
    fn try_split(
        &self,
        rows: &[usize],
        fit: &LinearFit,
        p: usize,
    ) -> Result<Option<(SplitRecord, Vec<usize>, Vec<usize>, LinearFit, LinearFit)>> {
        let Some(cand) = best_split(self.data, rows) else {
            return Ok(None);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.data.value(r, cand.feature) <= cand.threshold);
        if left.len() < p + 2 || right.len() < p + 2 {
            return Ok(None);
        }
        let left_fit = self.fit(&left)?;
        let right_fit = self.fit(&right)?;
        if !should_split(
            fit,
            &left_fit,
            &right_fit,
            left.len(),
            right.len(),
            self.lambda,
            self.theta,
        ) {
            return Ok(None);
        }
        let record = SplitRecord {
            feature: cand.feature,
            threshold: cand.threshold,
            sdr: cand.sdr,
            parent_r2_adj: fit.r2_adj,
            left_r2_adj: left_fit.r2_adj,
            right_r2_adj: right_fit.r2_adj,
            left_n: left.len(),
            right_n: right.len(),
        };
        Ok(Some((record, left, right, left_fit, right_fit)))
    }
}

/// Grows the tree on the given control rows.
pub fn build_tree(control: &DatasetView<'_>, params: &TreeParams) -> Result<TreeModel> {
    if control.is_empty() {
        return Err(Error::EmptyInput);
    }
    if params.lambda.is_nan() || params.lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda = {}", params.lambda)));
    }
    let data = control.data();
    let p = data.feature_count();
    let theta = params.theta.unwrap_or_else(|| default_theta(p));
    let mut warnings = Vec::new();
    let mut b = Builder {
        data,
        lambda: params.lambda,
        theta,
        max_depth: params.max_depth,
        nodes: Vec::new(),
    };
    let rows = control.rows().to_vec();
    let fit = b.fit(&rows)?;
    if rows.len() < p + 2 {
        warnings.push(format!(
            "{} control units for {p} features: tree left as a single leaf",
            rows.len()
        ));
        b.max_depth = 0;
    }
    let root = b.grow(rows, fit, 0)?;
    Ok(TreeModel {
        nodes: b.nodes,
        root,
        lambda: params.lambda,
        theta,
        feature_count: p,
        feature_names: data.feature_names().to_vec(),
        warnings,
    })
}

/// Machine-readable nested form of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NestedNode {
    Split {
        id: NodeId,
        feature: String,
        feature_index: usize,
        threshold: f64,
        n: usize,
        r2_adj: Option<f64>,
        left: alloc::boxed::Box<NestedNode>,
        right: alloc::boxed::Box<NestedNode>,
    },
    Leaf {
        id: NodeId,
        n: usize,
        r2_adj: Option<f64>,
        intercept: f64,
        coefficients: Vec<f64>,
    },
}

impl TreeModel {
    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Routes a unit from the root to its leaf; values equal to a threshold go left.
    pub fn assign_leaf(&self, x: &[f64]) -> NodeId {
        let mut id = self.root;
        loop {
            let node = &self.nodes[id];
            match (&node.split, node.children) {
                (Some(s), Some((l, r))) => {
                    id = if x[s.feature] <= s.threshold { l } else { r };
                }
                _ => return id,
            }
        }
    }

    pub fn leaf_model(&self, leaf: NodeId) -> Option<&LinearFit> {
        self.nodes[leaf].leaf_model.as_ref()
    }

    fn name(&self, j: usize) -> String {
        self.feature_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("x{}", j + 1))
    }

    /// One line per root-to-leaf path.
    pub fn rules(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_rules(self.root, &mut path, &mut out);
        out
    }

    fn collect_rules(&self, id: NodeId, path: &mut Vec<String>, out: &mut Vec<String>) {
        let node = &self.nodes[id];
        match (&node.split, node.children) {
            (Some(s), Some((l, r))) => {
                let name = self.name(s.feature);
                path.push(format!("{name} ≤ {:.4}", s.threshold));
                self.collect_rules(l, path, out);
                path.pop();
                path.push(format!("{name} > {:.4}", s.threshold));
                self.collect_rules(r, path, out);
                path.pop();
            }
            _ => {
                let cond = if path.is_empty() {
                    String::from("(all)")
                } else {
                    path.join(" ∧ ")
                };
                let r2 = match node.r2_adj {
                    Some(v) => format!("{v:.4}"),
                    None => String::from("undefined"),
                };
                out.push(format!(
                    "{cond} → leaf {}, n={}, r2_adj={r2}",
                    node.id,
                    node.control_rows.len()
                ));
            }
        }
    }

    pub fn to_nested(&self) -> NestedNode {
        self.nest(self.root)
    }

    fn nest(&self, id: NodeId) -> NestedNode {
        let node = &self.nodes[id];
        match (&node.split, node.children) {
            (Some(s), Some((l, r))) => NestedNode::Split {
                id,
                feature: self.name(s.feature),
                feature_index: s.feature,
                threshold: s.threshold,
                n: node.control_rows.len(),
                r2_adj: node.r2_adj,
                left: alloc::boxed::Box::new(self.nest(l)),
                right: alloc::boxed::Box::new(self.nest(r)),
            },
            _ => {
                let fit = node.leaf_model.as_ref();
                NestedNode::Leaf {
                    id,
                    n: node.control_rows.len(),
                    r2_adj: node.r2_adj,
                    intercept: fit.map_or(0.0, |f| f.intercept),
                    coefficients: fit.map(|f| f.coefficients.clone()).unwrap_or_default(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Controls from `rows`/`y` plus one treated unit appended at the end.
    fn controls(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        let p = rows[0].len();
        let mut rows = rows;
        let mut y = y;
        rows.push(vec![0.0; p]);
        y.push(0.0);
        let n = rows.len();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Dataset::new((0..n).map(|i| i == n - 1).collect(), rows, y, names).unwrap()
    }

    fn fit_with(r2_adj: Option<f64>) -> LinearFit {
        LinearFit {
            intercept: 0.0,
            coefficients: vec![],
            r2: r2_adj.unwrap_or(0.0),
            r2_adj,
            n_obs: 0,
            rank_deficient: false,
        }
    }

    fn piecewise(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.gen();
            let noise = rng.gen_range(-1e-3..1e-3);
            rows.push(vec![x]);
            y.push(if x <= 0.5 { x } else { 10.0 - x } + noise);
        }
        controls(rows, y)
    }

    #[test]
    fn sdr_examples() {
        assert_eq!(sdr(&[0.0, 0.0, 10.0, 10.0], &[0.0, 0.0], &[10.0, 10.0]).unwrap(), 5.0);
        assert_eq!(sdr(&[2.0; 4], &[2.0], &[2.0; 3]).unwrap(), 0.0);
        let v = sdr(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v, libm::sqrt(1.25) - 0.25 - 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.618034, epsilon = 1e-6);
        assert_eq!(sdr(&[1.0], &[], &[1.0]).unwrap_err(), Error::DegenerateSplit);
    }

    /// Enumerates every (feature, observed value) threshold with the direct `sdr`.
    fn brute_force_split(d: &Dataset, rows: &[usize]) -> Option<SplitCandidate> {
        let parent: Vec<f64> = rows.iter().map(|&r| d.y(r)).collect();
        let mut best: Option<SplitCandidate> = None;
        for j in 0..d.feature_count() {
            let mut values: Vec<f64> = rows.iter().map(|&r| d.value(r, j)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for &s in &values {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| d.value(i, j) <= s);
                let ly: Vec<f64> = l.iter().map(|&i| d.y(i)).collect();
                let ry: Vec<f64> = r.iter().map(|&i| d.y(i)).collect();
                if let Ok(v) = sdr(&parent, &ly, &ry) {
                    if best.map_or(true, |b| v > b.sdr + 1e-12) {
                        best = Some(SplitCandidate { feature: j, threshold: s, sdr: v });
                    }
                }
            }
        }
        best
    }

    #[test]
    fn best_split_single_feature() {
        let d = controls(
            vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]],
            vec![0.0, 0.0, 10.0, 10.0],
        );
        let s = best_split(&d, &[0, 1, 2, 3]).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 0.0));
        assert_abs_diff_eq!(s.sdr, 5.0, epsilon = 1e-12);
        assert_eq!(brute_force_split(&d, &[0, 1, 2, 3]).unwrap().threshold, 0.0);
    }

    #[test]
    fn best_split_constant_features() {
        let d = controls(vec![vec![1.0, 2.0]; 5], vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(best_split(&d, &[0, 1, 2, 3, 4]), None);
    }

    #[test]
    fn best_split_picks_separating_feature() {
        let rows = vec![
            vec![0.3, 0.0],
            vec![0.9, 0.0],
            vec![0.1, 0.0],
            vec![0.5, 1.0],
            vec![0.2, 1.0],
            vec![0.8, 1.0],
        ];
        let y = vec![1.0, 1.2, 0.9, 7.0, 7.1, 6.8];
        let d = controls(rows, y);
        let all: Vec<usize> = (0..6).collect();
        let s = best_split(&d, &all).unwrap();
        let oracle = brute_force_split(&d, &all).unwrap();
        assert_eq!(s.feature, 1);
        assert_eq!((s.feature, s.threshold), (oracle.feature, oracle.threshold));
        assert_abs_diff_eq!(s.sdr, oracle.sdr, epsilon = 1e-12);
    }

    #[test]
    fn split_rule_cases() {
        let p = fit_with(Some(0.5));
        // left improves by 0.2 with a large child
        assert!(should_split(&p, &fit_with(Some(0.7)), &fit_with(Some(0.4)), 50, 50, 0.1, 30));
        // both improve by 0.05 but both are small
        assert!(!should_split(&p, &fit_with(Some(0.55)), &fit_with(Some(0.55)), 10, 10, 0.1, 30));
        // right alone carries the split
        assert!(should_split(&p, &fit_with(Some(0.3)), &fit_with(Some(0.65)), 50, 40, 0.1, 30));
        // exact tie does not split
        assert!(!should_split(&p, &fit_with(Some(0.5)), &fit_with(Some(0.5)), 50, 50, 0.1, 30));
        // undefined child never justifies
        assert!(!should_split(&p, &fit_with(None), &fit_with(Some(0.4)), 2, 98, 0.1, 30));
    }

    #[test]
    fn piecewise_splits_near_kink() {
        let d = piecewise(500, 7);
        let (control, _) = d.split_by_treatment();
        let tree = build_tree(&control, &TreeParams::default()).unwrap();
        let root = tree.node(tree.root).split.as_ref().expect("root split");
        assert!(root.threshold > 0.45 && root.threshold < 0.55, "{}", root.threshold);
        for leaf in tree.leaves() {
            assert!(leaf.leaf_model.as_ref().unwrap().r2 > 0.99);
        }
        let leaf = tree.assign_leaf(&[0.9]);
        let pred = tree.leaf_model(leaf).unwrap().predict(&[0.9]);
        assert_abs_diff_eq!(pred, 9.1, epsilon = 0.01);
    }

    #[test]
    fn linear_outcome_rarely_splits() {
        let mut single = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for _ in 0..300 {
                let x: f64 = rng.gen();
                rows.push(vec![x]);
                y.push(2.0 * x + rng.gen_range(-0.5..0.5));
            }
            let d = controls(rows, y);
            let (control, _) = d.split_by_treatment();
            let tree = build_tree(&control, &TreeParams::default()).unwrap();
            if tree.leaf_count() == 1 {
                single += 1;
            }
        }
        assert!(single >= 45, "single-leaf trees: {single}/50");
    }

    #[test]
    fn tiny_control_set_is_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; 20]).collect();
        let d = controls(rows, (0..10).map(|i| i as f64).collect());
        let (control, _) = d.split_by_treatment();
        let tree = build_tree(&control, &TreeParams::default()).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.warnings.len(), 1);
        assert_eq!(tree.assign_leaf(&[3.0; 20]), tree.root);
    }

    fn subtree_leaves(tree: &TreeModel, id: NodeId, out: &mut Vec<NodeId>) {
        match tree.node(id).children {
            Some((l, r)) => {
                subtree_leaves(tree, l, out);
                subtree_leaves(tree, r, out);
            }
            None => out.push(id),
        }
    }

    #[test]
    fn threshold_ties_route_left() {
        let d = piecewise(400, 3);
        let (control, _) = d.split_by_treatment();
        let tree = build_tree(&control, &TreeParams::default()).unwrap();
        let s = tree.node(tree.root).split.clone().unwrap();
        let (l, _) = tree.node(tree.root).children.unwrap();
        let mut left_leaves = Vec::new();
        subtree_leaves(&tree, l, &mut left_leaves);
        assert!(left_leaves.contains(&tree.assign_leaf(&[s.threshold])));
    }

    #[test]
    fn export_formats() {
        let d = piecewise(300, 11);
        let (control, _) = d.split_by_treatment();
        let tree = build_tree(&control, &TreeParams::default()).unwrap();
        let rules = tree.rules();
        assert_eq!(rules.len(), tree.leaf_count());
        assert!(rules[0].starts_with("x1 ≤ "));
        assert!(rules[0].contains("→ leaf "));
        assert!(matches!(tree.to_nested(), NestedNode::Split { .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for _ in 0..n {
                let x: Vec<f64> = (0..p).map(|_| rng.gen()).collect();
                let kink = if x[0] > 0.4 { 3.0 * x[0] } else { -2.0 * x[0] };
                y.push(kink + x[p - 1] + rng.gen_range(-0.2..0.2));
                rows.push(x);
            }
            controls(rows, y)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn leaves_partition_controls(seed in 0u64..10_000, n in 40usize..300, p in 1usize..4) {
                let d = random_dataset(seed, n, p);
                let (control, _) = d.split_by_treatment();
                let tree = build_tree(&control, &TreeParams::default()).unwrap();
                let mut all: Vec<usize> = tree.leaves().flat_map(|l| l.control_rows.clone()).collect();
                all.sort_unstable();
                prop_assert_eq!(&all[..], control.rows());
                for leaf in tree.leaves() {
                    for &r in &leaf.control_rows {
                        prop_assert_eq!(tree.assign_leaf(d.row(r)), leaf.id);
                    }
                }
            }

            #[test]
            fn recorded_splits_recheck(seed in 0u64..10_000, n in 40usize..300, p in 1usize..4) {
                let d = random_dataset(seed, n, p);
                let (control, _) = d.split_by_treatment();
                let tree = build_tree(&control, &TreeParams::default()).unwrap();
                for node in &tree.nodes {
                    if let (Some(s), Some((l, r))) = (&node.split, node.children) {
                        prop_assert!(split_accepted(s.parent_r2_adj, s.left_r2_adj, s.right_r2_adj,
                            s.left_n, s.right_n, tree.lambda, tree.theta));
                        prop_assert_eq!(s.left_n, tree.node(l).control_rows.len());
                        prop_assert_eq!(s.right_n, tree.node(r).control_rows.len());
                        prop_assert!(tree.node(l).control_rows.iter().all(|&i| d.value(i, s.feature) <= s.threshold));
                        prop_assert!(tree.node(r).control_rows.iter().all(|&i| d.value(i, s.feature) > s.threshold));
                    } else {
                        prop_assert!(node.leaf_model.is_some());
                    }
                }
            }

            #[test]
            fn deterministic(seed in 0u64..10_000) {
                let d = random_dataset(seed, 200, 3);
                let (control, _) = d.split_by_treatment();
                let a = build_tree(&control, &TreeParams::default()).unwrap();
                let b = build_tree(&control, &TreeParams::default()).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn best_split_matches_enumeration(seed in 0u64..10_000, n in 2usize..40, p in 1usize..4) {
                let mut d = random_dataset(seed, n, p);
                // coarse grid to force repeated values
                let rows: Vec<Vec<f64>> = (0..d.len()).map(|i| d.row(i).iter().map(|v| (v * 4.0).floor()).collect()).collect();
                d = Dataset::new(d.treatment().to_vec(), rows, d.outcome().to_vec(), d.feature_names().to_vec()).unwrap();
                let (control, _) = d.split_by_treatment();
                let fast = best_split(&d, control.rows());
                let slow = brute_force_split(&d, control.rows());
                prop_assert_eq!(fast.is_some(), slow.is_some());
                if let (Some(f), Some(s)) = (fast, slow) {
                    prop_assert!((f.sdr - s.sdr).abs() < 1e-9, "{:?} {:?} {:?}", f, s, (0..d.len()).map(|i| (d.is_treated(i), d.row(i).to_vec(), d.y(i))).collect::<Vec<_>>());
                }
            }
        }
    }
}
