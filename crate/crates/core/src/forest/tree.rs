//! CART classification trees with Gini impurity.
//!
//! The builder presorts every feature once per forest and keeps, for each
//! node, a contiguous slice of each feature's sort order. Splitting a node
//! stably partitions those slices, so no sorting happens below the root.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_for};

/// Two decreases closer than this are treated as equal, and a split must
/// improve impurity by more than this to be taken.
pub const SPLIT_TOL: f64 = 1e-12;

/// `Σ p_i (1 - p_i)` over class proportions.
pub fn gini_impurity(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyNode);
    }
    let t = total as f64;
    Ok(counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * (1.0 - p)
        })
        .sum())
}

/// Weighted Gini decrease of splitting a binary node with class weights
/// `(c0, c1)` into a left child `(l0, l1)` and the complementary right child.
#[inline]
fn gini_decrease(c0: f64, c1: f64, l0: f64, l1: f64) -> f64 {
    let n = c0 + c1;
    let nl = l0 + l1;
    let (r0, r1) = (c0 - l0, c1 - l1);
    let nr = r0 + r1;
    // G(a, b) = 2ab / (a + b)^2, so weight * G = 2ab / (a + b) / n
    2.0 / n * (c0 * c1 / n - l0 * l1 / nl - r0 * r1 / nr)
}

#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Exhaustive search over `features` (in the given order) and midpoints
/// between consecutive distinct values. `rows` may repeat (bootstrap
/// multiplicity). Returns `None` when no split decreases impurity.
pub fn best_split(x: &Matrix, y: &[Label], rows: &[usize], features: &[usize]) -> Option<Split> {
    let mut c = [0.0f64; 2];
    for &r in rows {
        c[y[r].index()] += 1.0;
    }
    if c[0] == 0.0 || c[1] == 0.0 {
        return None;
    }
    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[(r, f)], y[r].index())));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0.0f64; 2];
        for k in 0..pairs.len() - 1 {
            left[pairs[k].1] += 1.0;
            if pairs[k].0 < pairs[k + 1].0 {
                let dec = gini_decrease(c[0], c[1], left[0], left[1]);
                if dec > best.map_or(SPLIT_TOL, |b| b.impurity_decrease + SPLIT_TOL) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        impurity_decrease: dec,
                    });
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf,
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Bootstrap-weighted class counts of training samples reaching the node.
    pub counts: [u32; 2],
    /// Node weight divided by root weight.
    pub sample_fraction: f64,
    /// Gini decrease achieved by this node's split (0 for leaves).
    pub impurity_decrease: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn majority(&self, tie: Label) -> Label {
        match self.counts[0].cmp(&self.counts[1]) {
            std::cmp::Ordering::Greater => Label::Lawful,
            std::cmp::Ordering::Less => Label::Unlawful,
            std::cmp::Ordering::Equal => tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf(&self, row: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.kind {
                NodeKind::Leaf => return node,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64], tie: Label) -> Label {
        self.leaf(row).majority(tie)
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i].kind {
                NodeKind::Leaf => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Leaf).count()
    }

    /// Re-derives every stored decrease from the stored class counts and
    /// returns the largest absolute discrepancy.
    pub fn audit(&self) -> f64 {
        let g = |c: [u32; 2]| gini_impurity(&[c[0] as usize, c[1] as usize]).unwrap_or(0.0);
        let w = |c: [u32; 2]| (c[0] + c[1]) as f64;
        let mut worst = 0.0f64;
        for n in &self.nodes {
            let expected = match n.kind {
                NodeKind::Leaf => 0.0,
                NodeKind::Split { left, right, .. } => {
                    let (l, r) = (self.nodes[left].counts, self.nodes[right].counts);
                    g(n.counts) - w(l) / w(n.counts) * g(l) - w(r) / w(n.counts) * g(r)
                }
            };
            worst = worst.max((expected - n.impurity_decrease).abs());
        }
        worst
    }

    /// Adds `sample_fraction * impurity_decrease` of each split into
    /// `acc[feature]`.
    pub fn accumulate_mdi(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let NodeKind::Split { feature, .. } = n.kind {
                acc[feature] += n.sample_fraction * n.impurity_decrease;
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, .. } => Some(feature),
            NodeKind::Leaf => None,
        })
    }
}

/// Nested JSON form of a tree.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NestedNode {
    Split {
        feature: usize,
        threshold: f64,
        impurity_decrease: f64,
        sample_fraction: f64,
        counts: [u32; 2],
        left: Box<NestedNode>,
        right: Box<NestedNode>,
    },
    Leaf {
        counts: [u32; 2],
        sample_fraction: f64,
    },
}

impl DecisionTree {
    fn to_nested(&self, i: usize) -> NestedNode {
        let n = &self.nodes[i];
        match n.kind {
            NodeKind::Leaf => NestedNode::Leaf {
                counts: n.counts,
                sample_fraction: n.sample_fraction,
            },
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            } => NestedNode::Split {
                feature,
                threshold,
                impurity_decrease: n.impurity_decrease,
                sample_fraction: n.sample_fraction,
                counts: n.counts,
                left: Box::new(self.to_nested(left)),
                right: Box::new(self.to_nested(right)),
            },
        }
    }

    fn push_nested(nodes: &mut Vec<Node>, nested: &NestedNode) -> usize {
        let id = nodes.len();
        match nested {
            NestedNode::Leaf {
                counts,
                sample_fraction,
            } => nodes.push(Node {
                counts: *counts,
                sample_fraction: *sample_fraction,
                impurity_decrease: 0.0,
                kind: NodeKind::Leaf,
            }),
            NestedNode::Split {
                feature,
                threshold,
                impurity_decrease,
                sample_fraction,
                counts,
                left,
                right,
            } => {
                nodes.push(Node {
                    counts: *counts,
                    sample_fraction: *sample_fraction,
                    impurity_decrease: *impurity_decrease,
                    kind: NodeKind::Leaf,
                });
                let l = Self::push_nested(nodes, left);
                let r = Self::push_nested(nodes, right);
                nodes[id].kind = NodeKind::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }
}

impl Serialize for DecisionTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested(0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DecisionTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nested = NestedNode::deserialize(d)?;
        let mut nodes = Vec::new();
        Self::push_nested(&mut nodes, &nested);
        Ok(DecisionTree { nodes })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// Candidate features per node, already resolved to a count in `1..=m`.
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

/// Training data laid out for tree growth: column-major values plus the
/// ascending sort order of every column (and the values in that order).
/// Built once, shared by all trees.
pub struct PresortedData {
    n_rows: usize,
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    sorted: Vec<Vec<f64>>,
    classes: Vec<u8>,
}

impl PresortedData {
    pub fn new(x: &Matrix, y: &[Label]) -> Self {
        let values: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        let order: Vec<Vec<u32>> = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        let sorted = order
            .iter()
            .zip(&values)
            .map(|(idx, col)| idx.iter().map(|&r| col[r as usize]).collect())
            .collect();
        PresortedData {
            n_rows: x.rows(),
            values,
            order,
            sorted,
            classes: y.iter().map(|l| l.index() as u8).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }
}

/// Grows one tree on the rows with non-zero `weights` (bootstrap
/// multiplicities).
///
/// Candidate features at a node are drawn from a stream seeded by the node's
/// path from the root, so a tree grown with a larger depth limit refines the
/// shallower one instead of diverging from it.
pub fn grow_tree(data: &PresortedData, weights: &[u32], params: &TreeParams, seed: u64) -> DecisionTree {
    grow_tree_in(data, weights, params, seed, &mut TreeWorkspace::default())
}

/// Scratch buffers for [`grow_tree_in`], reusable across trees.
#[derive(Debug, Default)]
pub struct TreeWorkspace {
    rows: Vec<u32>,
    vals: Vec<f64>,
    tmp_rows: Vec<u32>,
    tmp_vals: Vec<f64>,
    goes_left: Vec<bool>,
}

pub fn grow_tree_in(
    data: &PresortedData,
    weights: &[u32],
    params: &TreeParams,
    seed: u64,
    ws: &mut TreeWorkspace,
) -> DecisionTree {
    let m = data.n_features();
    let nd = weights.iter().filter(|&&w| w > 0).count();
    let TreeWorkspace {
        rows,
        vals,
        tmp_rows,
        tmp_vals,
        goes_left,
    } = ws;
    goes_left.clear();
    goes_left.resize(data.n_rows(), false);

    // Feature f's slice of the current node lives at rows[f*nd + start .. f*nd + end].
    // Branch-free compaction: write every row, advance only past in-bag ones.
    rows.clear();
    vals.clear();
    rows.resize(m * nd + 1, 0);
    vals.resize(m * nd + 1, 0.0);
    let mut w = 0;
    for f in 0..m {
        for (&r, &v) in data.order[f].iter().zip(&data.sorted[f]) {
            rows[w] = r;
            vals[w] = v;
            w += usize::from(weights[r as usize] > 0);
        }
    }

    let mut root_counts = [0u32; 2];
    for (r, &w) in weights.iter().enumerate() {
        root_counts[data.classes[r] as usize] += w;
    }
    let root_weight = (root_counts[0] + root_counts[1]) as f64;

    let mut nodes = vec![Node {
        counts: root_counts,
        sample_fraction: 1.0,
        impurity_decrease: 0.0,
        kind: NodeKind::Leaf,
    }];
    let mut stack = vec![(0usize, 0usize, nd, 0usize, seed)];
    let mut pool: Vec<usize> = (0..m).collect();
    let terminal = |c: [u32; 2], depth: usize| {
        c[0] == 0
            || c[1] == 0
            || params.max_depth.is_some_and(|d| depth >= d)
            || ((c[0] + c[1]) as usize) < params.min_samples_split
    };

    while let Some((id, start, end, depth, node_seed)) = stack.pop() {
        let counts = nodes[id].counts;
        if terminal(counts, depth) {
            continue;
        }

        let candidates: &[usize] = if params.mtry >= m {
            &pool[..m]
        } else {
            let mut rng = rng_for(node_seed);
            for (k, p) in pool.iter_mut().enumerate() {
                *p = k;
            }
            for k in 0..params.mtry {
                let j = rng.gen_range(k..m);
                pool.swap(k, j);
            }
            &pool[..params.mtry]
        };

        let (c0, c1) = (counts[0] as f64, counts[1] as f64);
        let mut best: Option<(usize, f64, f64, [u32; 2])> = None;
        for &f in candidates {
            let base = f * nd;
            let seg_rows = &rows[base + start..base + end];
            let seg_vals = &vals[base + start..base + end];
            let mut left = [0u32; 2];
            for k in 0..seg_rows.len() - 1 {
                let r = seg_rows[k] as usize;
                left[data.classes[r] as usize] += weights[r];
                if seg_vals[k] < seg_vals[k + 1] {
                    let dec = gini_decrease(c0, c1, left[0] as f64, left[1] as f64);
                    if dec > best.map_or(SPLIT_TOL, |b| b.2 + SPLIT_TOL) {
                        best = Some((f, midpoint(seg_vals[k], seg_vals[k + 1]), dec, left));
                    }
                }
            }
        }
        let Some((feature, threshold, decrease, left_counts)) = best else {
            continue;
        };

        let right_counts = [counts[0] - left_counts[0], counts[1] - left_counts[1]];
        let left_id = nodes.len();
        let right_id = left_id + 1;
        for c in [left_counts, right_counts] {
            nodes.push(Node {
                counts: c,
                sample_fraction: (c[0] + c[1]) as f64 / root_weight,
                impurity_decrease: 0.0,
                kind: NodeKind::Leaf,
            });
        }
        nodes[id].impurity_decrease = decrease;
        nodes[id].kind = NodeKind::Split {
            feature,
            threshold,
            left: left_id,
            right: right_id,
        };
        if terminal(left_counts, depth + 1) && terminal(right_counts, depth + 1) {
            continue;
        }

        // Stable partition of every feature slice by the chosen rule.
        let base = feature * nd;
        for k in base + start..base + end {
            goes_left[rows[k] as usize] = vals[k] <= threshold;
        }
        let mut n_left = 0;
        for f in 0..m {
            let base = f * nd;
            tmp_rows.clear();
            tmp_vals.clear();
            let mut w = base + start;
            for k in base + start..base + end {
                let r = rows[k];
                if goes_left[r as usize] {
                    rows[w] = r;
                    vals[w] = vals[k];
                    w += 1;
                } else {
                    tmp_rows.push(r);
                    tmp_vals.push(vals[k]);
                }
            }
            rows[w..base + end].copy_from_slice(&tmp_rows);
            vals[w..base + end].copy_from_slice(&tmp_vals);
            n_left = w - (base + start);
        }
        let mid = start + n_left;
        stack.push((right_id, mid, end, depth + 1, derive_seed(node_seed, 2)));
        stack.push((left_id, start, mid, depth + 1, derive_seed(node_seed, 1)));
    }
    DecisionTree { nodes }
}

/// Grows a tree on explicit (possibly repeated) row indices.
pub fn fit_tree(
    x: &Matrix,
    y: &[Label],
    rows: &[usize],
    params: &TreeParams,
    seed: u64,
) -> DecisionTree {
    let data = PresortedData::new(x, y);
    let mut weights = vec![0u32; x.rows()];
    for &r in rows {
        weights[r] += 1;
    }
    grow_tree(&data, &weights, params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn labels(v: &[usize]) -> Vec<Label> {
        v.iter().map(|&i| Label::from_index(i)).collect()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(&[4, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[2, 2]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert!(matches!(gini_impurity(&[0, 0]), Err(Error::EmptyNode)));
    }

    #[test]
    fn gini_decrease_matches_definition() {
        let (c0, c1, l0, l1) = (5.0, 3.0, 4.0, 1.0);
        let g = |a: f64, b: f64| 1.0 - (a / (a + b)).powi(2) - (b / (a + b)).powi(2);
        let expected = g(c0, c1) - 5.0 / 8.0 * g(l0, l1) - 3.0 / 8.0 * g(c0 - l0, c1 - l1);
        assert!((gini_decrease(c0, c1, l0, l1) - expected).abs() < 1e-15);
    }

    #[test]
    fn best_split_simple_threshold() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let y = labels(&[0, 0, 1, 1]);
        let s = best_split(&x, &y, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(s.threshold, 2.5);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn best_split_none_cases() {
        let x = Matrix::from_rows(&[[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]).unwrap();
        assert!(best_split(&x, &labels(&[1, 1, 1]), &[0, 1, 2], &[0, 1]).is_none());
        assert!(best_split(&x, &labels(&[0, 1, 0]), &[0, 1, 2], &[1]).is_none());
    }

    #[test]
    fn root_split_agrees_with_reference_search() {
        let mut rng = rng_for(5);
        let n = 60;
        let rows_x: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.gen_range(0..8) as f64, rng.gen::<f64>(), rng.gen_range(0..3) as f64])
            .collect();
        let x = Matrix::from_rows(&rows_x).unwrap();
        let y: Vec<Label> = (0..n)
            .map(|i| Label::from_index(((rows_x[i][0] > 3.0) ^ (rng.gen::<f64>() < 0.2)) as usize))
            .collect();
        let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let params = TreeParams {
            mtry: 3,
            max_depth: Some(1),
            min_samples_split: 2,
        };
        let tree = fit_tree(&x, &y, &boot, &params, 1);
        let reference = best_split(&x, &y, &boot, &[0, 1, 2]).unwrap();
        match tree.root().kind {
            NodeKind::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, reference.feature);
                assert_eq!(threshold, reference.threshold);
                assert_eq!(tree.root().impurity_decrease, reference.impurity_decrease);
            }
            NodeKind::Leaf => panic!("expected a split"),
        }
    }

    #[test]
    fn full_tree_memorizes_consistent_data_and_passes_audit() {
        let mut rng = rng_for(9);
        let n = 80;
        let xs: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let y: Vec<Label> = xs
            .iter()
            .map(|r| Label::from_index(((r[0] - 0.5) * (r[1] - 0.5) > 0.0) as usize))
            .collect();
        let all: Vec<usize> = (0..n).collect();
        let params = TreeParams {
            mtry: 2,
            max_depth: None,
            min_samples_split: 2,
        };
        let tree = fit_tree(&x, &y, &all, &params, 2);
        for i in 0..n {
            assert_eq!(tree.predict(x.row(i), Label::Unlawful), y[i]);
        }
        assert!(tree.audit() <= 1e-12);
        assert!(tree.nodes().iter().all(|n| n.impurity_decrease >= 0.0));
    }

    #[test]
    fn deeper_limit_refines_shallower_tree() {
        let mut rng = rng_for(12);
        let n = 200;
        let xs: Vec<[f64; 4]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let y: Vec<Label> = xs
            .iter()
            .map(|r| Label::from_index((r[0] + 0.5 * r[1] + 0.3 * rng.gen::<f64>() > 0.9) as usize))
            .collect();
        let all: Vec<usize> = (0..n).collect();
        let mut prev = 0;
        for depth in 1..12 {
            let params = TreeParams { mtry: 2, max_depth: Some(depth), min_samples_split: 2 };
            let tree = fit_tree(&x, &y, &all, &params, 77);
            let correct = (0..n).filter(|&i| tree.predict(x.row(i), Label::Unlawful) == y[i]).count();
            assert!(correct >= prev, "depth {depth}: {correct} < {prev}");
            prev = correct;
        }
    }

    #[test]
    fn json_nested_round_trip() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let y = labels(&[0, 1, 0, 1, 1]);
        let params = TreeParams {
            mtry: 1,
            max_depth: None,
            min_samples_split: 2,
        };
        let tree = fit_tree(&x, &y, &[0, 1, 2, 3, 4], &params, 3);
        let json = serde_json::to_string(&tree).unwrap();
        assert!(json.contains("\"left\""));
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        for i in 0..5 {
            assert_eq!(back.predict(x.row(i), Label::Unlawful), tree.predict(x.row(i), Label::Unlawful));
        }
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
