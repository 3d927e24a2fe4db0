//! Newton gradient-boosted regression trees with a pluggable per-sample
//! gradient/Hessian objective.
//!
//! Split finding is exact greedy over sorted unique feature values (no
//! histograms): thresholds are midpoints of adjacent distinct values, the
//! split score is the Newton gain
//! `0.5 * (G_L^2/(H_L+reg) + G_R^2/(H_R+reg) - G^2/(H+reg))`, and leaf
//! weights are `-G/(H+reg)`. Ties in gain break toward the lower feature
//! index, then the lower threshold, so fits are bit-reproducible.

use crate::data::RowMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Groups with Hessian mass below this cannot be Newton-stepped; their score
/// is zero and their leaf weight is zero.
pub const HESS_FLOOR: f64 = 1e-12;

/// A node of a regression tree stored in an arena; children always have
/// larger ids than their parent and the root is id 0.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { weight: f64 },
}

/// A regression tree: arena of nodes, root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validate an externally supplied arena: ids in range, children strictly
    /// after their parent, every non-root node referenced exactly once, and
    /// finite thresholds/weights.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("tree has no nodes".into()));
        }
        let mut referenced = vec![0usize; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            match node {
                TreeNode::Internal { feature: _, threshold, left, right } => {
                    if !threshold.is_finite() {
                        return Err(Error::NonFinite(format!("threshold of node {id}")));
                    }
                    for &child in [left, right] {
                        if child <= id || child >= nodes.len() {
                            return Err(Error::InvalidArgument(format!(
                                "node {id} has invalid child {child}"
                            )));
                        }
                        referenced[child] += 1;
                    }
                }
                TreeNode::Leaf { weight } => {
                    if !weight.is_finite() {
                        return Err(Error::NonFinite(format!("weight of node {id}")));
                    }
                }
            }
        }
        if referenced[0] != 0 || referenced[1..].iter().any(|&r| r != 1) {
            return Err(Error::InvalidArgument("node arena is not a proper tree".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Route `x` down the tree (`x[feature] <= threshold` goes left) and
    /// return the leaf weight.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Internal { feature, threshold, left, right } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Depth of the deepest leaf (root = 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize, d: usize) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => d,
                TreeNode::Internal { left, right, .. } => {
                    walk(nodes, *left, d + 1).max(walk(nodes, *right, d + 1))
                }
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

/// An ordered boosted ensemble: prediction is
/// `base_score + learning_rate * sum_j tree_j(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTreeEnsemble {
    trees: Vec<Tree>,
    learning_rate: f64,
    base_score: f64,
}

impl RegressionTreeEnsemble {
    pub fn new(learning_rate: f64) -> Self {
        Self { trees: Vec::new(), learning_rate, base_score: 0.0 }
    }

    pub fn from_parts(trees: Vec<Tree>, learning_rate: f64, base_score: f64) -> Self {
        Self { trees, learning_rate, base_score }
    }

    pub fn push(&mut self, tree: Tree) {
        self.trees.push(tree);
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += self.learning_rate * tree.predict(x);
        }
        acc
    }
}

/// Per-sample first and second derivatives of the objective.
#[derive(Debug, Clone)]
pub struct GradHessBatch {
    grads: Vec<f64>,
    hess: Vec<f64>,
}

impl GradHessBatch {
    pub fn new(grads: Vec<f64>, hess: Vec<f64>) -> Result<Self> {
        if grads.len() != hess.len() || grads.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "grads ({}) and hess ({}) must be equal-length and non-empty",
                grads.len(),
                hess.len()
            )));
        }
        if let Some(i) = grads.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient {i}")));
        }
        for (i, &h) in hess.iter().enumerate() {
            if !h.is_finite() {
                return Err(Error::NonFinite(format!("hessian {i}")));
            }
            if h < 0.0 {
                return Err(Error::InvalidArgument(format!("hessian {i} is negative: {h}")));
            }
        }
        Ok(Self { grads, hess })
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn hess(&self) -> &[f64] {
        &self.hess
    }
}

/// Tree growth controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub tree_reg: f64,
    pub min_gain: f64,
    /// Reserved for row/feature sampling extensions; the exact greedy fit
    /// does not consume randomness.
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, tree_reg: 1.0, min_gain: 0.0, seed: 0 }
    }
}

fn score(g: f64, h: f64, reg: f64) -> f64 {
    let denom = h + reg;
    if denom > HESS_FLOOR {
        g * g / denom
    } else {
        0.0
    }
}

fn leaf_weight(g: f64, h: f64, reg: f64) -> f64 {
    let denom = h + reg;
    if denom > HESS_FLOOR {
        -g / denom
    } else {
        0.0
    }
}

/// A candidate split found while scanning one feature.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Exact greedy tree fitter with feature pre-sorting shared across rounds.
///
/// Sorting the feature columns costs `O(D M log M)` once; each tree then
/// needs one `O(M)` pass per feature per depth level.
pub struct TreeFitter<'a> {
    rows: &'a RowMatrix,
    // per feature: row indices ordered by value, and the values in that order
    sorted_idx: Vec<Vec<u32>>,
    sorted_val: Vec<Vec<f64>>,
}

impl<'a> TreeFitter<'a> {
    pub fn new(rows: &'a RowMatrix) -> Result<Self> {
        let m = rows.rows();
        if m == 0 {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        if m > u32::MAX as usize {
            return Err(Error::InvalidArgument("row count exceeds u32 range".into()));
        }
        let d = rows.cols();
        let columns: Vec<(Vec<u32>, Vec<f64>)> = par::map_collect(d, |f| {
            let mut idx: Vec<u32> = (0..m as u32).collect();
            idx.sort_by(|&a, &b| {
                rows.get(a as usize, f).total_cmp(&rows.get(b as usize, f)).then(a.cmp(&b))
            });
            let val: Vec<f64> = idx.iter().map(|&r| rows.get(r as usize, f)).collect();
            (idx, val)
        });
        let mut sorted_idx = Vec::with_capacity(d);
        let mut sorted_val = Vec::with_capacity(d);
        for (i, v) in columns {
            sorted_idx.push(i);
            sorted_val.push(v);
        }
        Ok(Self { rows, sorted_idx, sorted_val })
    }

    pub fn rows(&self) -> &RowMatrix {
        self.rows
    }

    /// Fit one tree against per-row gradients/Hessians (level-wise growth).
    pub fn fit(&self, grads: &[f64], hess: &[f64], params: &TreeParams) -> Result<Tree> {
        let m = self.rows.rows();
        if grads.len() != m || hess.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "gradients for {} rows, matrix has {m}",
                grads.len()
            )));
        }
        if params.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }

        const SETTLED: u32 = u32::MAX;
        let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { weight: 0.0 }];
        // active[slot] = (node id, G, H) for the current level
        let mut active: Vec<(usize, f64, f64)> = Vec::new();
        let mut row_slot: Vec<u32> = vec![0; m];

        let mut g_root = 0.0;
        let mut h_root = 0.0;
        for r in 0..m {
            g_root += grads[r];
            h_root += hess[r];
        }
        active.push((0, g_root, h_root));

        for depth in 0..=params.max_depth {
            if active.is_empty() {
                break;
            }
            // best candidate per (feature, slot); None if no split allowed
            let per_feature: Vec<Vec<Option<Candidate>>> = if depth == params.max_depth {
                Vec::new()
            } else {
                let n_slots = active.len();
                par::map_collect(self.rows.cols(), |f| {
                    self.scan_feature(f, n_slots, &active, &row_slot, grads, hess, params)
                })
            };

            // reduce across features in index order; ties keep the earlier
            // feature and (within a feature) the lower threshold
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            for cands in &per_feature {
                for (slot, cand) in cands.iter().enumerate() {
                    if let Some(c) = cand {
                        let better = match &best[slot] {
                            None => true,
                            Some(b) => c.gain > b.gain,
                        };
                        if better {
                            best[slot] = Some(*c);
                        }
                    }
                }
            }

            // decide each slot: split or become a leaf
            enum Decision {
                Leaf,
                Split { feature: usize, threshold: f64, left_slot: u32, right_slot: u32 },
            }
            let mut decisions: Vec<Decision> = Vec::with_capacity(active.len());
            let mut next_active: Vec<(usize, f64, f64)> = Vec::new();
            for (slot, &(node_id, _, _)) in active.iter().enumerate() {
                match best.get(slot).and_then(|b| *b) {
                    Some(c) => {
                        let left_id = nodes.len();
                        nodes.push(TreeNode::Leaf { weight: 0.0 });
                        let right_id = nodes.len();
                        nodes.push(TreeNode::Leaf { weight: 0.0 });
                        nodes[node_id] = TreeNode::Internal {
                            feature: c.feature,
                            threshold: c.threshold,
                            left: left_id,
                            right: right_id,
                        };
                        let left_slot = next_active.len() as u32;
                        next_active.push((left_id, 0.0, 0.0));
                        let right_slot = next_active.len() as u32;
                        next_active.push((right_id, 0.0, 0.0));
                        decisions.push(Decision::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left_slot,
                            right_slot,
                        });
                    }
                    None => decisions.push(Decision::Leaf),
                }
            }

            // route rows in index order; leaf stats accumulate in the same
            // order so serialized weights are reproducible bit for bit
            let mut leaf_stats: Vec<(f64, f64)> = vec![(0.0, 0.0); active.len()];
            for r in 0..m {
                let slot = row_slot[r];
                if slot == SETTLED {
                    continue;
                }
                match &decisions[slot as usize] {
                    Decision::Leaf => {
                        let s = &mut leaf_stats[slot as usize];
                        s.0 += grads[r];
                        s.1 += hess[r];
                        row_slot[r] = SETTLED;
                    }
                    Decision::Split { feature, threshold, left_slot, right_slot } => {
                        let child = if self.rows.get(r, *feature) <= *threshold {
                            *left_slot
                        } else {
                            *right_slot
                        };
                        let s = &mut next_active[child as usize];
                        s.1 += grads[r];
                        s.2 += hess[r];
                        row_slot[r] = child;
                    }
                }
            }
            for (slot, decision) in decisions.iter().enumerate() {
                if let Decision::Leaf = decision {
                    let (g, h) = leaf_stats[slot];
                    let node_id = active[slot].0;
                    nodes[node_id] =
                        TreeNode::Leaf { weight: leaf_weight(g, h, params.tree_reg) };
                }
            }
            active = next_active;
        }

        // the loop settles everything at depth == max_depth
        debug_assert!(active.is_empty());
        Ok(Tree { nodes })
    }

    /// One pass over a feature's sorted order, tracking prefix stats per
    /// active slot and recording the best admissible split of each.
    #[allow(clippy::too_many_arguments)]
    fn scan_feature(
        &self,
        feature: usize,
        n_slots: usize,
        active: &[(usize, f64, f64)],
        row_slot: &[u32],
        grads: &[f64],
        hess: &[f64],
        params: &TreeParams,
    ) -> Vec<Option<Candidate>> {
        const SETTLED: u32 = u32::MAX;
        #[derive(Clone, Copy)]
        struct ScanState {
            cum_g: f64,
            cum_h: f64,
            seen: bool,
            prev_val: f64,
            best_gain: f64,
            best_thr: f64,
        }
        let mut states = vec![
            ScanState {
                cum_g: 0.0,
                cum_h: 0.0,
                seen: false,
                prev_val: 0.0,
                best_gain: f64::NEG_INFINITY,
                best_thr: 0.0,
            };
            n_slots
        ];
        let idx = &self.sorted_idx[feature];
        let val = &self.sorted_val[feature];
        for (j, &r) in idx.iter().enumerate() {
            let slot = row_slot[r as usize];
            if slot == SETTLED {
                continue;
            }
            let st = &mut states[slot as usize];
            let v = val[j];
            if st.seen && v > st.prev_val {
                let (_, g_tot, h_tot) = active[slot as usize];
                let g_r = g_tot - st.cum_g;
                let h_r = h_tot - st.cum_h;
                let gain = 0.5
                    * (score(st.cum_g, st.cum_h, params.tree_reg)
                        + score(g_r, h_r, params.tree_reg)
                        - score(g_tot, h_tot, params.tree_reg));
                if gain > params.min_gain && gain > st.best_gain {
                    let mid = 0.5 * (st.prev_val + v);
                    // guard against midpoint rounding up to the right value
                    let thr = if mid < v { mid } else { st.prev_val };
                    st.best_gain = gain;
                    st.best_thr = thr;
                }
            }
            st.cum_g += grads[r as usize];
            st.cum_h += hess[r as usize];
            st.prev_val = v;
            st.seen = true;
        }
        states
            .into_iter()
            .map(|st| {
                if st.best_gain > f64::NEG_INFINITY {
                    Some(Candidate { gain: st.best_gain, feature, threshold: st.best_thr })
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Fit a single tree (convenience wrapper that pre-sorts on the fly).
pub fn fit_tree(rows: &RowMatrix, gh: &GradHessBatch, params: &TreeParams) -> Result<Tree> {
    if gh.len() != rows.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient rows for {} data rows",
            gh.len(),
            rows.rows()
        )));
    }
    TreeFitter::new(rows)?.fit(gh.grads(), gh.hess(), params)
}

/// Drive a boosting loop with a caller-supplied objective: each round the
/// closure fills per-row gradients/Hessians for the current predictions.
pub fn boost<F>(
    rows: &RowMatrix,
    n_rounds: usize,
    learning_rate: f64,
    params: &TreeParams,
    mut objective: F,
) -> Result<RegressionTreeEnsemble>
where
    F: FnMut(&[f64], &mut [f64], &mut [f64]),
{
    let fitter = TreeFitter::new(rows)?;
    let m = rows.rows();
    let mut ensemble = RegressionTreeEnsemble::new(learning_rate);
    let mut preds = vec![0.0; m];
    let mut grads = vec![0.0; m];
    let mut hess = vec![0.0; m];
    for round in 0..n_rounds {
        objective(&preds, &mut grads, &mut hess);
        if grads.iter().any(|v| !v.is_finite()) || hess.iter().any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Numerical(format!("bad gradients at round {round}")));
        }
        let tree = fitter.fit(&grads, &hess, params)?;
        par::for_each_chunk_mut(&mut preds, 4096, |chunk_idx, chunk| {
            let base = chunk_idx * 4096;
            for (off, p) in chunk.iter_mut().enumerate() {
                *p += learning_rate * tree.predict(rows.row(base + off));
            }
        });
        ensemble.push(tree);
    }
    Ok(ensemble)
}

/// Predict every row of a matrix.
pub fn predict_rows(ensemble: &RegressionTreeEnsemble, rows: &RowMatrix) -> Vec<f64> {
    par::map_collect(rows.rows(), |r| ensemble.predict(rows.row(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn matrix(data: &[f64], cols: usize) -> RowMatrix {
        RowMatrix::new(data.to_vec(), cols).unwrap()
    }

    fn gh(g: &[f64], h: &[f64]) -> GradHessBatch {
        GradHessBatch::new(g.to_vec(), h.to_vec()).unwrap()
    }

    #[test]
    fn single_row_newton_step() {
        let rows = matrix(&[0.0], 1);
        let params = TreeParams { tree_reg: 0.0, ..TreeParams::default() };
        let tree = fit_tree(&rows, &gh(&[2.0], &[2.0]), &params).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&[0.0]), -1.0);
    }

    #[test]
    fn identical_features_yield_single_leaf() {
        let rows = matrix(&[1.5, 1.5, 1.5], 1);
        let tree =
            fit_tree(&rows, &gh(&[1.0, -2.0, 0.5], &[1.0, 1.0, 1.0]), &TreeParams::default())
                .unwrap();
        assert_eq!(tree.nodes().len(), 1);
    }

    #[test]
    fn two_point_split_hand_example() {
        // x = {0, 1}, g = {-2, +2}, h = {1, 1}, reg = 0, min_gain = 0:
        // both candidate assignments enumerated by hand give the split at
        // 0.5 with gain 4 and leaf weights +2 / -2.
        let rows = matrix(&[0.0, 1.0], 1);
        let params = TreeParams { tree_reg: 0.0, min_gain: 0.0, ..TreeParams::default() };
        let tree = fit_tree(&rows, &gh(&[-2.0, 2.0], &[1.0, 1.0]), &params).unwrap();
        match &tree.nodes()[0] {
            TreeNode::Internal { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected internal root, got {other:?}"),
        }
        assert_eq!(tree.predict(&[0.0]), 2.0);
        assert_eq!(tree.predict(&[1.0]), -2.0);
    }

    #[test]
    fn predict_tree_routing() {
        let leaf = Tree::from_nodes(vec![TreeNode::Leaf { weight: 3.0 }]).unwrap();
        assert_eq!(leaf.predict(&[42.0]), 3.0);
        let tree = Tree::from_nodes(vec![
            TreeNode::Internal { feature: 0, threshold: 0.5, left: 1, right: 2 },
            TreeNode::Leaf { weight: 1.0 },
            TreeNode::Leaf { weight: 2.0 },
        ])
        .unwrap();
        // boundary routes left by <=
        assert_eq!(tree.predict(&[0.5, 9.0]), 1.0);
        assert_eq!(tree.predict(&[0.6, 9.0]), 2.0);
    }

    #[test]
    fn malformed_trees_rejected() {
        // child pointing at itself
        assert!(Tree::from_nodes(vec![TreeNode::Internal {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0
        }])
        .is_err());
        // unreferenced node
        assert!(Tree::from_nodes(vec![
            TreeNode::Leaf { weight: 0.0 },
            TreeNode::Leaf { weight: 1.0 },
        ])
        .is_err());
    }

    #[test]
    fn ensemble_prediction_examples() {
        let empty = RegressionTreeEnsemble::new(0.01);
        assert_eq!(empty.predict(&[1.0]), 0.0);

        let leaf2 = Tree::from_nodes(vec![TreeNode::Leaf { weight: 2.0 }]).unwrap();
        let mut ens = RegressionTreeEnsemble::new(0.01);
        ens.push(leaf2.clone());
        assert!((ens.predict(&[0.0]) - 0.02).abs() < 1e-15);

        let leaf3 = Tree::from_nodes(vec![TreeNode::Leaf { weight: 3.0 }]).unwrap();
        let mut ens = RegressionTreeEnsemble::new(0.5);
        ens.push(leaf2);
        ens.push(leaf3);
        assert_eq!(ens.predict(&[0.0]), 2.5);
    }

    #[test]
    fn deterministic_fit() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = 200;
        let data: Vec<f64> = (0..m * 3).map(|_| rng.random::<f64>()).collect();
        let rows = matrix(&data, 3);
        let g: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let h: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let params = TreeParams::default();
        let t1 = fit_tree(&rows, &gh(&g, &h), &params).unwrap();
        let t2 = fit_tree(&rows, &gh(&g, &h), &params).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn leaf_weights_match_audit() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let m = 300;
        let data: Vec<f64> = (0..m * 2).map(|_| rng.random::<f64>()).collect();
        let rows = matrix(&data, 2);
        let g: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let h: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.1).collect();
        let reg = 0.7;
        let params = TreeParams { tree_reg: reg, ..TreeParams::default() };
        let tree = fit_tree(&rows, &gh(&g, &h), &params).unwrap();

        // audit: route every row, re-accumulate (G, H) per leaf in row order
        let mut leaf_g = vec![0.0; tree.nodes().len()];
        let mut leaf_h = vec![0.0; tree.nodes().len()];
        for r in 0..m {
            let mut id = 0;
            loop {
                match &tree.nodes()[id] {
                    TreeNode::Leaf { .. } => break,
                    TreeNode::Internal { feature, threshold, left, right } => {
                        id = if rows.get(r, *feature) <= *threshold { *left } else { *right };
                    }
                }
            }
            leaf_g[id] += g[r];
            leaf_h[id] += h[r];
        }
        for (id, node) in tree.nodes().iter().enumerate() {
            if let TreeNode::Leaf { weight } = node {
                if leaf_h[id] + reg > HESS_FLOOR {
                    let err = (weight + leaf_g[id] / (leaf_h[id] + reg)).abs();
                    assert!(err <= 1e-12, "leaf {id}: audit error {err}");
                }
            }
        }
    }

    /// Hand-rolled stump booster (exact enumeration over all thresholds of
    /// the single feature) as the oracle for squared-error boosting.
    fn oracle_stump_boost(xs: &[f64], ys: &[f64], rounds: usize, lr: f64, reg: f64) -> Vec<f64> {
        let m = xs.len();
        let mut preds = vec![0.0; m];
        for _ in 0..rounds {
            let g: Vec<f64> = (0..m).map(|i| 2.0 * (preds[i] - ys[i])).collect();
            let h = vec![2.0; m];
            // enumerate splits over sorted unique values
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
            let (g_tot, h_tot) = (g.iter().sum::<f64>(), h.iter().sum::<f64>());
            let mut best: Option<(f64, f64)> = None; // (gain, threshold)
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..m - 1 {
                gl += g[order[w]];
                hl += h[order[w]];
                let (a, b) = (xs[order[w]], xs[order[w + 1]]);
                if a == b {
                    continue;
                }
                let gain = 0.5
                    * (gl * gl / (hl + reg)
                        + (g_tot - gl) * (g_tot - gl) / (h_tot - hl + reg)
                        - g_tot * g_tot / (h_tot + reg));
                if gain > 0.0 && best.map(|(bg, _)| gain > bg).unwrap_or(true) {
                    best = Some((gain, 0.5 * (a + b)));
                }
            }
            match best {
                Some((_, thr)) => {
                    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..m {
                        if xs[i] <= thr {
                            gl += g[i];
                            hl += h[i];
                        } else {
                            gr += g[i];
                            hr += h[i];
                        }
                    }
                    let (wl, wr) = (-gl / (hl + reg), -gr / (hr + reg));
                    for i in 0..m {
                        preds[i] += lr * if xs[i] <= thr { wl } else { wr };
                    }
                }
                None => {
                    let w = -g_tot / (h_tot + reg);
                    for p in preds.iter_mut() {
                        *p += lr * w;
                    }
                }
            }
        }
        preds
    }

    #[test]
    fn squared_error_boosting_matches_stump_oracle() {
        let xs = [0.1, 0.25, 0.4, 0.42, 0.6, 0.61, 0.8, 0.85, 0.9, 0.95, 0.2, 0.3];
        let ys = [1.0, 1.2, 0.9, 1.1, 3.0, 3.2, 2.9, 3.1, 3.0, 2.8, 1.05, 0.95];
        let rows = matrix(&xs, 1);
        let params = TreeParams { max_depth: 1, tree_reg: 1.0, ..TreeParams::default() };
        let lr = 0.3;
        let rounds = 25;

        let ens = boost(&rows, rounds, lr, &params, |preds, g, h| {
            for i in 0..preds.len() {
                g[i] = 2.0 * (preds[i] - ys[i]);
                h[i] = 2.0;
            }
        })
        .unwrap();

        let oracle = oracle_stump_boost(&xs, &ys, rounds, lr, 1.0);
        let mut prev_mse = f64::INFINITY;
        let mut mse_track = Vec::new();
        for round in 1..=rounds {
            let partial =
                RegressionTreeEnsemble::from_parts(ens.trees()[..round].to_vec(), lr, 0.0);
            let mse: f64 = (0..xs.len())
                .map(|i| (partial.predict(&[xs[i]]) - ys[i]).powi(2))
                .sum::<f64>()
                / xs.len() as f64;
            assert!(mse <= prev_mse + 1e-12, "round {round}: MSE rose {prev_mse} -> {mse}");
            prev_mse = mse;
            mse_track.push(mse);
        }
        for i in 0..xs.len() {
            let ours = ens.predict(&[xs[i]]);
            assert!(
                (ours - oracle[i]).abs() < 1e-10,
                "row {i}: {ours} vs oracle {}",
                oracle[i]
            );
        }
        assert!(*mse_track.last().unwrap() < 0.05 * mse_track[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn max_depth_never_exceeded(
            seed in 0u64..1000,
            m in 2usize..80,
            depth in 1usize..5,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..m * 2).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let rows = matrix(&data, 2);
            let g: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let h: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let params = TreeParams { max_depth: depth, tree_reg: 0.5, ..TreeParams::default() };
            let tree = fit_tree(&rows, &gh(&g, &h), &params).unwrap();
            prop_assert!(tree.depth() <= depth);
        }
    }
}
