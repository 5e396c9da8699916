//! Weighted regression trees with a fixed leaf budget.
//!
//! Trees are grown best-first: every open leaf carries its best split, and the
//! leaf whose split gains the most is expanded until `max_leaves` is reached
//! or no split has positive gain. Per-sample inputs are the weighted responses
//! `z_i * w_i` (for the logistic losses this is the residual `r - p`, or the
//! abc combination of two residuals) and the weights `w_i`.
//!
//! The split search walks each feature in ascending order through
//! [`FeatureRanks`], accumulating prefix sums per distinct value, so cuts only
//! ever fall between two different values.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureRanks;
use crate::error::ModelError;

/// Added to leaf denominators so a leaf whose weights have all vanished still
/// gets a finite value.
pub const DEFAULT_DAMPING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCriterion {
    /// Weighted variance reduction using response and weight sums.
    SecondOrder,
    /// Squared residual sums only; weights are ignored.
    FirstOrder,
}

/// Gain of cutting a node into a prefix and the remainder.
///
/// `prefix_zw`/`total_zw` are sums of `z_i * w_i`, `prefix_w`/`total_w` sums of
/// `w_i`. Returns `None` when the second-order gain is undefined because one
/// side carries no weight.
pub fn split_gain(
    prefix_zw: f64,
    prefix_w: f64,
    total_zw: f64,
    total_w: f64,
    criterion: SplitCriterion,
) -> Option<f64> {
    let right_zw = total_zw - prefix_zw;
    match criterion {
        SplitCriterion::SecondOrder => {
            let right_w = total_w - prefix_w;
            if prefix_w <= 0.0 || right_w <= 0.0 {
                return None;
            }
            // GL^2/HL + GR^2/HR - G^2/H, rearranged so it cannot cancel below zero
            let d = prefix_zw * right_w - right_zw * prefix_w;
            Some(d * d / (prefix_w * right_w * total_w))
        }
        SplitCriterion::FirstOrder => {
            Some(prefix_zw * prefix_zw + right_zw * right_zw - total_zw * total_zw)
        }
    }
}

/// `scale * numerator / (denominator + damping)`.
pub fn leaf_value(numerator: f64, denominator: f64, scale: f64, damping: f64) -> f64 {
    if is_saturated(numerator, denominator, damping) {
        debug!(
            "leaf weight {denominator:e} is below the damping term {damping:e}; \
             leaf value saturates (numerator {numerator:e})"
        );
    }
    scale * numerator / (denominator + damping)
}

/// The leaf's weight mass is smaller than the damping guard, so its value is
/// dominated by `numerator / damping`.
pub fn is_saturated(numerator: f64, denominator: f64, damping: f64) -> bool {
    numerator != 0.0 && denominator < damping
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Node>", into = "Vec<Node>")]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl From<RegressionTree> for Vec<Node> {
    fn from(tree: RegressionTree) -> Self {
        tree.nodes
    }
}

impl TryFrom<Vec<Node>> for RegressionTree {
    type Error = ModelError;

    fn try_from(nodes: Vec<Node>) -> Result<Self, ModelError> {
        RegressionTree::from_nodes(nodes)
    }
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Build a tree from raw nodes, checking that every node is reachable from
    /// the root exactly once and that all values are finite.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::Invalid("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(ModelError::Invalid(format!(
                    "node {id} is reachable twice"
                )));
            }
            match nodes[id] {
                Node::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if left == right || left >= nodes.len() || right >= nodes.len() {
                        return Err(ModelError::Invalid(format!(
                            "node {id} has invalid children ({left}, {right})"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(ModelError::Invalid(format!(
                            "node {id} has a non-finite threshold"
                        )));
                    }
                    stack.push(right);
                    stack.push(left);
                }
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(ModelError::Invalid(format!(
                            "leaf {id} has a non-finite value"
                        )));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(ModelError::Invalid(format!(
                "node {orphan} is unreachable"
            )));
        }
        Ok(RegressionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Largest feature index used by any split.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Id of the leaf `sample` lands in. Values `<= threshold` go left.
    pub fn leaf_index(&self, sample: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if sample[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn predict(&self, sample: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(sample)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index always stops at a leaf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// J, the leaf budget.
    pub max_leaves: usize,
    pub criterion: SplitCriterion,
    /// Minimum number of samples on each side of a split.
    pub min_leaf: usize,
    /// Multiplier on `sum(z w) / sum(w)` for leaf values.
    pub leaf_scale: f64,
    pub damping: f64,
}

impl TreeParams {
    pub fn new(max_leaves: usize, criterion: SplitCriterion) -> Self {
        TreeParams {
            max_leaves,
            criterion,
            min_leaf: 1,
            leaf_scale: 1.0,
            damping: DEFAULT_DAMPING,
        }
    }
}

/// A fitted tree together with where each training sample ended up.
#[derive(Debug, Clone)]
pub struct FittedTree {
    pub tree: RegressionTree,
    /// Leaf node id per sample; `u32::MAX` for samples outside the fitted subset.
    pub leaf_of: Vec<u32>,
    pub saturated_leaves: usize,
}

impl FittedTree {
    /// Tree output for training sample `i`, read from the fit-time assignment.
    pub fn output(&self, i: usize) -> f64 {
        match self.tree.nodes[self.leaf_of[i] as usize] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("samples are assigned to leaves"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    zw: f64,
    w: f64,
    n: u32,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    /// Highest rank sent left.
    left_rank: u32,
    /// Lowest rank present on the right, within this node.
    right_rank: u32,
}

struct OpenLeaf {
    node: usize,
    samples: Vec<u32>,
    hist: Vec<Bin>,
    zw: f64,
    w: f64,
    split: Option<SplitChoice>,
}

fn build_hist(
    samples: &[u32],
    residuals: &[f64],
    weights: &[f64],
    ranks: &FeatureRanks,
    offsets: &[usize],
) -> Vec<Bin> {
    let mut hist = vec![Bin::default(); ranks.total_bins()];
    for &i in samples {
        let i = i as usize;
        let (zw, w) = (residuals[i], weights[i]);
        for (&r, &off) in ranks.sample_ranks(i).iter().zip(offsets) {
            let bin = &mut hist[off + r as usize];
            bin.zw += zw;
            bin.w += w;
            bin.n += 1;
        }
    }
    hist
}

/// Node totals, summed over the first feature's bins in ascending order.
fn totals(hist: &[Bin], ranks: &FeatureRanks) -> (f64, f64) {
    hist[..ranks.n_distinct(0)]
        .iter()
        .fold((0.0, 0.0), |(zw, w), b| (zw + b.zw, w + b.w))
}

fn best_split(
    hist: &[Bin],
    n: usize,
    total_zw: f64,
    total_w: f64,
    ranks: &FeatureRanks,
    params: &TreeParams,
) -> Option<SplitChoice> {
    let min_leaf = params.min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mut best: Option<SplitChoice> = None;
    let mut best_gain = 0.0;
    for feature in 0..ranks.n_features() {
        let off = ranks.offset(feature);
        let bins = &hist[off..off + ranks.n_distinct(feature)];
        let (mut zw, mut w, mut count) = (0.0, 0.0, 0usize);
        let mut prev: Option<u32> = None;
        for (r, bin) in bins.iter().enumerate() {
            if bin.n == 0 {
                continue;
            }
            if let Some(left_rank) = prev {
                if count >= min_leaf && n - count >= min_leaf {
                    if let Some(gain) = split_gain(zw, w, total_zw, total_w, params.criterion) {
                        if gain > best_gain {
                            best_gain = gain;
                            best = Some(SplitChoice {
                                gain,
                                feature,
                                left_rank,
                                right_rank: r as u32,
                            });
                        }
                    }
                }
            }
            zw += bin.zw;
            w += bin.w;
            count += bin.n as usize;
            prev = Some(r as u32);
        }
    }
    best
}

/// Fit a regression tree with at most `params.max_leaves` leaves.
///
/// `residuals[i]` is the weighted response `z_i * w_i`, `weights[i]` is `w_i`;
/// both are indexed by sample id and only `samples` are used. Leaf values are
/// `leaf_scale * sum(z w) / (sum(w) + damping)` over each leaf's samples.
pub fn fit_tree(
    residuals: &[f64],
    weights: &[f64],
    ranks: &FeatureRanks,
    samples: &[u32],
    params: &TreeParams,
) -> FittedTree {
    assert_eq!(residuals.len(), weights.len());
    assert_eq!(residuals.len(), ranks.n_samples());
    assert!(!samples.is_empty(), "cannot fit a tree to zero samples");

    let offsets: Vec<usize> = (0..ranks.n_features()).map(|d| ranks.offset(d)).collect();
    let max_leaves = params.max_leaves.max(1);

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let root_hist = build_hist(samples, residuals, weights, ranks, &offsets);
    let (zw, w) = totals(&root_hist, ranks);
    let split = if max_leaves > 1 {
        best_split(&root_hist, samples.len(), zw, w, ranks, params)
    } else {
        None
    };
    let mut open = vec![OpenLeaf {
        node: 0,
        samples: samples.to_vec(),
        hist: root_hist,
        zw,
        w,
        split,
    }];
    let mut n_leaves = 1;

    while n_leaves < max_leaves {
        // Highest gain wins; on ties the earliest-created leaf.
        let mut pick: Option<(usize, f64)> = None;
        for (pos, leaf) in open.iter().enumerate() {
            if let Some(s) = leaf.split {
                if pick.is_none_or(|(_, g)| s.gain > g) {
                    pick = Some((pos, s.gain));
                }
            }
        }
        let Some((pos, _)) = pick else { break };
        let parent = open.remove(pos);
        let choice = parent.split.expect("picked leaf has a split");

        let (left_samples, right_samples): (Vec<u32>, Vec<u32>) = parent
            .samples
            .iter()
            .partition(|&&i| ranks.rank(i as usize, choice.feature) <= choice.left_rank);

        let left = nodes.len();
        let right = left + 1;
        nodes[parent.node] = Node::Split {
            feature: choice.feature,
            threshold: ranks.threshold_between(choice.feature, choice.left_rank, choice.right_rank),
            left,
            right,
        };
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        n_leaves += 1;

        // Build the smaller child directly and get the larger one by subtraction.
        let left_is_small = left_samples.len() <= right_samples.len();
        let small_hist = build_hist(
            if left_is_small { &left_samples } else { &right_samples },
            residuals,
            weights,
            ranks,
            &offsets,
        );
        let mut large_hist = parent.hist;
        for (big, small) in large_hist.iter_mut().zip(&small_hist) {
            big.n -= small.n;
            if big.n == 0 {
                *big = Bin::default();
            } else {
                big.zw -= small.zw;
                big.w -= small.w;
            }
        }
        let (left_hist, right_hist) = if left_is_small {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        let more = n_leaves < max_leaves;
        for (node, samples, hist) in [
            (left, left_samples, left_hist),
            (right, right_samples, right_hist),
        ] {
            let (zw, w) = totals(&hist, ranks);
            let split = if more {
                best_split(&hist, samples.len(), zw, w, ranks, params)
            } else {
                None
            };
            open.push(OpenLeaf {
                node,
                samples,
                hist: if split.is_some() { hist } else { Vec::new() },
                zw,
                w,
                split,
            });
        }
    }

    let mut leaf_of = vec![u32::MAX; residuals.len()];
    let mut saturated_leaves = 0;
    for leaf in &open {
        if is_saturated(leaf.zw, leaf.w, params.damping) {
            saturated_leaves += 1;
        }
        nodes[leaf.node] = Node::Leaf {
            value: leaf_value(leaf.zw, leaf.w, params.leaf_scale, params.damping),
        };
        for &i in &leaf.samples {
            leaf_of[i as usize] = leaf.node as u32;
        }
    }
    FittedTree {
        tree: RegressionTree { nodes },
        leaf_of,
        saturated_leaves,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Weighted sum of squares around the weighted mean, computed in two passes.
    fn weighted_sse(z: &[f64], w: &[f64]) -> f64 {
        let sw: f64 = w.iter().sum();
        if sw <= 0.0 {
            return 0.0;
        }
        let mean = z.iter().zip(w).map(|(z, w)| z * w).sum::<f64>() / sw;
        z.iter().zip(w).map(|(z, w)| (z - mean).powi(2) * w).sum()
    }

    fn ds_1d(x: &[f64]) -> Dataset {
        let labels = (0..x.len()).map(|i| i % 3).collect();
        Dataset::new(x.to_vec(), 1, labels, 3).unwrap()
    }

    fn random_ds(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        let x = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = (0..n).map(|i| i % 3).collect();
        Dataset::new(x, d, y, 3).unwrap()
    }

    fn all(n: usize) -> Vec<u32> {
        (0..n as u32).collect()
    }

    /// Weighted SSE of the partition a fitted tree induces.
    fn partition_sse(fit: &FittedTree, z: &[f64], w: &[f64]) -> f64 {
        let mut groups: std::collections::BTreeMap<u32, (Vec<f64>, Vec<f64>)> = Default::default();
        for i in 0..z.len() {
            let e = groups.entry(fit.leaf_of[i]).or_default();
            e.0.push(z[i]);
            e.1.push(w[i]);
        }
        groups.values().map(|(z, w)| weighted_sse(z, w)).sum()
    }

    #[test]
    fn gain_hand_example() {
        let g = split_gain(1.0, 1.0, 0.0, 2.0, SplitCriterion::SecondOrder).unwrap();
        assert_eq!(g, 2.0);
    }

    #[test]
    fn gain_zero_for_constant_response() {
        let c = 0.7;
        let w = [0.3, 1.2, 0.5];
        let total_zw: f64 = w.iter().map(|w| c * w).sum();
        let total_w: f64 = w.iter().sum();
        let mut pzw = 0.0;
        let mut pw = 0.0;
        for wi in &w[..2] {
            pzw += c * wi;
            pw += wi;
            let g = split_gain(pzw, pw, total_zw, total_w, SplitCriterion::SecondOrder).unwrap();
            assert!(g.abs() < 1e-12, "{g}");
        }
    }

    #[test]
    fn degenerate_side_is_skipped() {
        assert!(split_gain(0.0, 0.0, 1.0, 2.0, SplitCriterion::SecondOrder).is_none());
        assert!(split_gain(1.0, 2.0, 1.0, 2.0, SplitCriterion::SecondOrder).is_none());
    }

    #[test]
    fn first_order_gain_ignores_weights() {
        // [1] + [1]: 1 + 1 - 4
        let g = split_gain(1.0, 100.0, 2.0, 101.0, SplitCriterion::FirstOrder).unwrap();
        assert_eq!(g, -2.0);
        let g = split_gain(1.0, 0.0, 0.0, 0.0, SplitCriterion::FirstOrder).unwrap();
        assert_eq!(g, 2.0);
    }

    #[test]
    fn gain_argmax_matches_brute_force_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 50;
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total_zw: f64 = z.iter().zip(&w).map(|(z, w)| z * w).sum();
            let total_w: f64 = w.iter().sum();
            let sse_t = weighted_sse(&z, &w);
            let (mut pzw, mut pw) = (0.0, 0.0);
            let mut best_fast = (0, f64::MIN);
            let mut best_slow = (0, f64::MIN);
            for s in 1..n {
                pzw += z[s - 1] * w[s - 1];
                pw += w[s - 1];
                let fast =
                    split_gain(pzw, pw, total_zw, total_w, SplitCriterion::SecondOrder).unwrap();
                let slow = sse_t - weighted_sse(&z[..s], &w[..s]) - weighted_sse(&z[s..], &w[s..]);
                if fast > best_fast.1 {
                    best_fast = (s, fast);
                }
                if slow > best_slow.1 {
                    best_slow = (s, slow);
                }
            }
            assert_eq!(best_fast.0, best_slow.0);
        }
    }

    #[test]
    fn leaf_value_rules() {
        assert_eq!(leaf_value(0.0, 3.0, 0.9, 0.0), 0.0);
        assert_eq!(leaf_value(0.0, 0.0, 0.9, DEFAULT_DAMPING), 0.0);
        let v = leaf_value(1.0, 2.0, 0.9, 0.0);
        assert!((v - 0.45).abs() < 1e-15);
        let v = leaf_value(0.3, 0.0, 1.0, 1e-12);
        assert!(v.is_finite() && v > 1e10);
        assert!(is_saturated(0.3, 0.0, 1e-12));
        assert!(!is_saturated(0.3, 1.0, 1e-12));
    }

    #[test]
    fn unsplittable_data_gives_a_single_leaf() {
        let ds = Dataset::new(vec![2.0; 12], 2, vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let ranks = FeatureRanks::from_dataset(&ds);
        let z = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = [1.0, 1.0, 2.0, 2.0, 1.0, 1.0];
        let zw: Vec<f64> = z.iter().zip(&w).map(|(z, w)| z * w).collect();
        let params = TreeParams {
            leaf_scale: 0.5,
            ..TreeParams::new(4, SplitCriterion::SecondOrder)
        };
        let fit = fit_tree(&zw, &w, &ranks, &all(6), &params);
        assert_eq!(fit.tree.n_leaves(), 1);
        let mean = zw.iter().sum::<f64>() / w.iter().sum::<f64>();
        let v = fit.tree.predict(&[2.0, 2.0]);
        assert!((v - 0.5 * mean).abs() < 1e-9);
    }

    #[test]
    fn stump_on_sign_data_cuts_at_the_midpoint() {
        let x = [-3.0, 0.5, -0.25, 2.0, -1.0, 4.0];
        let z: Vec<f64> = x.iter().map(|v: &f64| v.signum()).collect();
        let w = vec![1.0; x.len()];
        let ds = ds_1d(&x);
        let ranks = FeatureRanks::from_dataset(&ds);
        let fit = fit_tree(&z, &w, &ranks, &all(x.len()), &TreeParams::new(2, SplitCriterion::SecondOrder));
        match fit.tree.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, (-0.25 + 0.5) / 2.0),
            ref n => panic!("expected a split, got {n:?}"),
        }
        // Enumerated oracle: the sign boundary has the largest gain of all cuts.
        let mut sorted: Vec<(f64, f64)> = x.iter().copied().zip(z.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let zs: Vec<f64> = sorted.iter().map(|p| p.1).collect();
        let best = (1..zs.len())
            .max_by(|&a, &b| {
                let ga = weighted_sse(&zs, &w) - weighted_sse(&zs[..a], &w[..a]) - weighted_sse(&zs[a..], &w[a..]);
                let gb = weighted_sse(&zs, &w) - weighted_sse(&zs[..b], &w[..b]) - weighted_sse(&zs[b..], &w[b..]);
                ga.total_cmp(&gb)
            })
            .unwrap();
        assert_eq!(best, 3);
    }

    #[test]
    fn boundary_value_goes_left() {
        let tree = RegressionTree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: -1.0 },
            Node::Leaf { value: 1.0 },
        ])
        .unwrap();
        assert_eq!(tree.predict(&[0.5]), -1.0);
        assert_eq!(tree.predict(&[0.5000001]), 1.0);
        assert_eq!(RegressionTree::leaf(3.25).predict(&[100.0, -4.0]), 3.25);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let cyclic = vec![
            Node::Split { feature: 0, threshold: 0.0, left: 1, right: 0 },
            Node::Leaf { value: 0.0 },
        ];
        assert!(RegressionTree::from_nodes(cyclic).is_err());
        let same_children = vec![
            Node::Split { feature: 0, threshold: 0.0, left: 1, right: 1 },
            Node::Leaf { value: 0.0 },
        ];
        assert!(RegressionTree::from_nodes(same_children).is_err());
        let orphan = vec![Node::Leaf { value: 0.0 }, Node::Leaf { value: 1.0 }];
        assert!(RegressionTree::from_nodes(orphan).is_err());
        assert!(RegressionTree::from_nodes(vec![Node::Leaf { value: f64::NAN }]).is_err());
    }

    #[test]
    fn predictions_match_fit_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = random_ds(&mut rng, 150, 3);
        let ranks = FeatureRanks::from_dataset(&ds);
        let z: Vec<f64> = (0..150).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..150).map(|_| rng.gen_range(0.1..1.0)).collect();
        let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a * b).collect();
        let fit = fit_tree(&zw, &w, &ranks, &all(150), &TreeParams::new(8, SplitCriterion::SecondOrder));
        assert_eq!(fit.tree.n_leaves(), 8);
        for i in 0..150 {
            assert_eq!(fit.tree.leaf_index(ds.row(i)), fit.leaf_of[i] as usize);
            assert_eq!(fit.tree.predict(ds.row(i)), fit.output(i));
        }
    }

    #[test]
    fn min_leaf_is_honoured() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = random_ds(&mut rng, 60, 2);
        let ranks = FeatureRanks::from_dataset(&ds);
        let zw: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = vec![1.0; 60];
        let params = TreeParams {
            min_leaf: 7,
            ..TreeParams::new(10, SplitCriterion::SecondOrder)
        };
        let fit = fit_tree(&zw, &w, &ranks, &all(60), &params);
        let mut counts = std::collections::HashMap::new();
        for &l in &fit.leaf_of {
            *counts.entry(l).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 7), "{counts:?}");
    }

    #[test]
    fn subset_fit_leaves_other_samples_unassigned() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ds = random_ds(&mut rng, 40, 2);
        let ranks = FeatureRanks::from_dataset(&ds);
        let zw: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = vec![1.0; 40];
        let subset: Vec<u32> = (0..40).step_by(2).collect();
        let fit = fit_tree(&zw, &w, &ranks, &subset, &TreeParams::new(4, SplitCriterion::SecondOrder));
        for i in 0..40 {
            assert_eq!(fit.leaf_of[i] == u32::MAX, i % 2 == 1);
        }
    }

    /// Depth-first greedy reference: split the first splittable leaf in DFS
    /// order using an O(n^2) brute-force weighted-SSE search.
    fn depth_first_reference(x: &[Vec<f64>], z: &[f64], w: &[f64], j: usize) -> f64 {
        fn best_cut(x: &[Vec<f64>], z: &[f64], w: &[f64], idx: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
            let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
            let ws: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let total = weighted_sse(&zs, &ws);
            let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
            for d in 0..x[0].len() {
                let mut sorted = idx.to_vec();
                sorted.sort_by(|&a, &b| x[a][d].total_cmp(&x[b][d]));
                for s in 1..sorted.len() {
                    if x[sorted[s - 1]][d] == x[sorted[s]][d] {
                        continue;
                    }
                    let (l, r) = sorted.split_at(s);
                    let sse = |ids: &[usize]| {
                        let zz: Vec<f64> = ids.iter().map(|&i| z[i]).collect();
                        let ww: Vec<f64> = ids.iter().map(|&i| w[i]).collect();
                        weighted_sse(&zz, &ww)
                    };
                    let gain = total - sse(l) - sse(r);
                    if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.0) {
                        best = Some((gain, l.to_vec(), r.to_vec()));
                    }
                }
            }
            best.map(|(_, l, r)| (l, r))
        }
        fn grow(x: &[Vec<f64>], z: &[f64], w: &[f64], idx: Vec<usize>, budget: &mut usize, out: &mut Vec<Vec<usize>>) {
            if *budget > 0 {
                if let Some((l, r)) = best_cut(x, z, w, &idx) {
                    *budget -= 1;
                    grow(x, z, w, l, budget, out);
                    grow(x, z, w, r, budget, out);
                    return;
                }
            }
            out.push(idx);
        }
        let mut leaves = Vec::new();
        let mut budget = j - 1;
        grow(x, z, w, (0..z.len()).collect(), &mut budget, &mut leaves);
        leaves
            .iter()
            .map(|ids| {
                let zz: Vec<f64> = ids.iter().map(|&i| z[i]).collect();
                let ww: Vec<f64> = ids.iter().map(|&i| w[i]).collect();
                weighted_sse(&zz, &ww)
            })
            .sum()
    }

    #[test]
    fn best_first_beats_depth_first_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..5 {
            let n = 200;
            let ds = random_ds(&mut rng, n, 3);
            let x: Vec<Vec<f64>> = (0..n).map(|i| ds.row(i).to_vec()).collect();
            let z: Vec<f64> = x
                .iter()
                .map(|r| (3.0 * r[0]).sin() + r[1] * r[2] + rng.gen_range(-0.3..0.3))
                .collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a * b).collect();
            let ranks = FeatureRanks::from_dataset(&ds);
            let fit = fit_tree(&zw, &w, &ranks, &all(n), &TreeParams::new(8, SplitCriterion::SecondOrder));
            let ours = partition_sse(&fit, &z, &w);
            let reference = depth_first_reference(&x, &z, &w, 8);
            assert!(ours <= reference + 1e-9, "best-first {ours} > depth-first {reference}");
        }
    }

    #[test]
    fn more_leaves_never_increase_training_sse() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 120;
        let ds = random_ds(&mut rng, n, 2);
        let ranks = FeatureRanks::from_dataset(&ds);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a * b).collect();
        let mut prev = f64::INFINITY;
        for j in 1..=12 {
            let fit = fit_tree(&zw, &w, &ranks, &all(n), &TreeParams::new(j, SplitCriterion::SecondOrder));
            let sse = partition_sse(&fit, &z, &w);
            assert!(sse <= prev + 1e-12, "J={j}: {sse} > {prev}");
            prev = sse;
        }
    }

    #[test]
    fn first_order_and_second_order_trees_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let ds = random_ds(&mut rng, n, 3);
        let ranks = FeatureRanks::from_dataset(&ds);
        let zw: Vec<f64> = (0..n).map(|i| if ds.value(i, 0) > 0.0 { 0.4 } else { -0.6 } + rng.gen_range(-0.2..0.2)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.25)).collect();
        let a = fit_tree(&zw, &w, &ranks, &all(n), &TreeParams::new(6, SplitCriterion::SecondOrder));
        let b = fit_tree(&zw, &w, &ranks, &all(n), &TreeParams::new(6, SplitCriterion::FirstOrder));
        assert_ne!(a.tree, b.tree);
    }
}
