//! Label clustering for the surrogate task: label centroids, random-walk label
//! correlations, recursive balanced spherical 2-means and meta-label vectors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::sparse::SparseVector;
use crate::LabelId;

pub const DEFAULT_WALKS_PER_LABEL: usize = 400;
pub const DEFAULT_WALK_LEN: usize = 2;
pub const DEFAULT_CORRELATION_TOP_K: usize = 100;
/// Independent k-means++ seedings per split.
pub const KMEANS_RESTARTS: u64 = 8;
pub const MAX_KMEANS_ITERS: usize = 50;

/// Unit-norm label centroids over raw features; labels without positives get
/// a zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCentroids {
    pub dim: usize,
    pub rows: Vec<SparseVector>,
}

impl LabelCentroids {
    pub fn num_labels(&self) -> usize {
        self.rows.len()
    }

    pub fn empty_labels(&self) -> Vec<LabelId> {
        (0..self.rows.len() as LabelId)
            .filter(|&l| self.rows[l as usize].is_empty())
            .collect()
    }
}

pub fn compute_centroids(d: &Dataset) -> LabelCentroids {
    let mut acc: Vec<Vec<(u32, f64)>> = vec![Vec::new(); d.num_labels()];
    for (i, ls) in d.labels().iter().enumerate() {
        for &l in ls {
            acc[l as usize].extend(d.feature(i).iter());
        }
    }
    let rows = acc
        .into_iter()
        .map(|pairs| {
            let mut v = SparseVector::from_pairs(pairs);
            v.normalize();
            let (idx, val): (Vec<u32>, Vec<f64>) = v.iter().filter(|p| p.1 != 0.0).unzip();
            SparseVector::from_parts(idx, val).expect("filtered centroid")
        })
        .collect();
    LabelCentroids {
        dim: d.num_features(),
        rows,
    }
}

/// Row-stochastic label co-occurrence estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrelation {
    pub rows: Vec<Vec<(LabelId, f64)>>,
}

impl LabelCorrelation {
    pub fn get(&self, from: LabelId, to: LabelId) -> f64 {
        let row = &self.rows[from as usize];
        match row.binary_search_by_key(&to, |e| e.0) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }
}

/// Random walks on the label–document bipartite graph. Each hop moves to a
/// uniformly chosen positive document of the current label and then to a
/// uniformly chosen label of that document; every landing label is counted.
/// Rows keep the `top_k` most visited labels and are ℓ1-normalised.
pub fn estimate_correlation(
    d: &Dataset,
    walks_per_label: usize,
    walk_len: usize,
    top_k: usize,
    seed: u64,
) -> Result<LabelCorrelation> {
    if walks_per_label == 0 || walk_len == 0 || top_k == 0 {
        return Err(Error::InvalidParam("walk parameters must be >= 1".into()));
    }
    let label_points = d.label_points();
    let mut rows = Vec::with_capacity(d.num_labels());
    for l in 0..d.num_labels() {
        if label_points[l].is_empty() {
            rows.push(Vec::new());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        let mut counts: BTreeMap<LabelId, u64> = BTreeMap::new();
        for _ in 0..walks_per_label {
            let mut cur = l;
            for _ in 0..walk_len {
                let docs = &label_points[cur];
                let doc = docs[rng.gen_range(0..docs.len())] as usize;
                let ls = d.point_labels(doc);
                cur = ls[rng.gen_range(0..ls.len())] as usize;
                *counts.entry(cur as LabelId).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(LabelId, u64)> = counts.into_iter().collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(top_k);
        let total: u64 = kept.iter().map(|e| e.1).sum();
        let mut row: Vec<(LabelId, f64)> = kept
            .into_iter()
            .map(|(p, c)| (p, c as f64 / total as f64))
            .collect();
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    Ok(LabelCorrelation { rows })
}

/// `rep'_l = normalize(rep_l + Σ_p C_lp rep_p)`
pub fn smooth_with_correlation(reps: &[SparseVector], corr: &LabelCorrelation) -> Vec<SparseVector> {
    reps.iter()
        .enumerate()
        .map(|(l, rep)| {
            let mut pairs: Vec<(u32, f64)> = rep.iter().collect();
            for &(p, c) in &corr.rows[l] {
                pairs.extend(reps[p as usize].iter().map(|(t, v)| (t, c * v)));
            }
            let mut v = SparseVector::from_pairs(pairs);
            v.normalize();
            v
        })
        .collect()
}

/// Outcome of one balanced 2-means split.
#[derive(Debug, Clone)]
pub struct Split {
    pub left: Vec<LabelId>,
    pub right: Vec<LabelId>,
    pub mean_left: Vec<f64>,
    pub mean_right: Vec<f64>,
    /// Σ similarity of every label to its side's mean, after each mean update.
    pub objective_trace: Vec<f64>,
}

/// Objective of a fixed partition with its optimal unit means:
/// `‖Σ_left rep‖ + ‖Σ_right rep‖`.
pub fn split_objective(left: &[LabelId], right: &[LabelId], reps: &[SparseVector], dim: usize) -> f64 {
    let side = |ids: &[LabelId]| {
        let mut s = vec![0.0; dim];
        for &l in ids {
            reps[l as usize].add_to_dense(1.0, &mut s);
        }
        math::norm(&s)
    };
    side(left) + side(right)
}

fn dense_of(v: &SparseVector, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    v.add_to_dense(1.0, &mut out);
    out
}

/// Balanced spherical 2-means with k-means++ seeding, best of
/// [`KMEANS_RESTARTS`] seedings by final objective. `left_size` labels go
/// left; the assignment step ranks labels by `sim(μ+) − sim(μ−)` (ties to the
/// lower id) and the mean step re-normalises each side's sum.
pub fn balanced_split_with_size(
    labels: &[LabelId],
    reps: &[SparseVector],
    dim: usize,
    left_size: usize,
    seed: u64,
) -> Result<Split> {
    if labels.len() < 2 || left_size == 0 || left_size >= labels.len() {
        return Err(Error::InvalidParam(alloc::format!(
            "cannot split {} labels with {} on the left",
            labels.len(),
            left_size
        )));
    }
    let nonzero: Vec<LabelId> = labels
        .iter()
        .copied()
        .filter(|&l| !reps[l as usize].is_empty())
        .collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateInput("all label representations are zero".into()));
    }
    let mut best: Option<Split> = None;
    for k in 0..KMEANS_RESTARTS {
        let s = split_once(labels, &nonzero, reps, dim, left_size, seed.wrapping_add(k.wrapping_mul(0x9e37_79b9)));
        let score = s.objective_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score > b.objective_trace.last().copied().unwrap_or(f64::NEG_INFINITY) + 1e-12) {
            best = Some(s);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn split_once(labels: &[LabelId], nonzero: &[LabelId], reps: &[SparseVector], dim: usize, left_size: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++: first centre uniform, second ∝ (1 − cos)².
    let first = nonzero[rng.gen_range(0..nonzero.len())];
    let mut mean_left = dense_of(&reps[first as usize], dim);
    let weights: Vec<f64> = labels
        .iter()
        .map(|&l| {
            let d = 1.0 - reps[l as usize].dot_dense(&mean_left);
            d * d
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let second = if total > 0.0 {
        let mut target = rng.gen::<f64>() * total;
        let mut pick = labels[labels.len() - 1];
        for (&l, &w) in labels.iter().zip(&weights) {
            if target < w {
                pick = l;
                break;
            }
            target -= w;
        }
        pick
    } else {
        let mut k = rng.gen_range(0..labels.len() - 1);
        if labels[k] == first {
            k = labels.len() - 1;
        }
        labels[k]
    };
    let mut mean_right = dense_of(&reps[second as usize], dim);

    let mut sorted: Vec<LabelId> = labels.to_vec();
    sorted.sort_unstable();
    let mut prev_left: Option<Vec<LabelId>> = None;
    let mut trace = Vec::new();
    let mut order: Vec<(f64, LabelId)> = Vec::with_capacity(sorted.len());
    for _ in 0..MAX_KMEANS_ITERS {
        order.clear();
        order.extend(sorted.iter().map(|&l| {
            let r = &reps[l as usize];
            (r.dot_dense(&mean_left) - r.dot_dense(&mean_right), l)
        }));
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut left: Vec<LabelId> = order[..left_size].iter().map(|e| e.1).collect();
        left.sort_unstable();
        if prev_left.as_ref() == Some(&left) {
            break;
        }
        let mut right: Vec<LabelId> = order[left_size..].iter().map(|e| e.1).collect();
        right.sort_unstable();
        mean_left = vec![0.0; dim];
        mean_right = vec![0.0; dim];
        for &l in &left {
            reps[l as usize].add_to_dense(1.0, &mut mean_left);
        }
        for &l in &right {
            reps[l as usize].add_to_dense(1.0, &mut mean_right);
        }
        trace.push(math::normalize(&mut mean_left) + math::normalize(&mut mean_right));
        prev_left = Some(left);
    }
    let left = prev_left.expect("at least one iteration");
    let right: Vec<LabelId> = sorted.iter().copied().filter(|l| left.binary_search(l).is_err()).collect();
    Split {
        left,
        right,
        mean_left,
        mean_right,
        objective_trace: trace,
    }
}

/// Even split (left gets the extra label on odd counts), optionally on
/// correlation-smoothed representations.
pub fn balanced_2means_split(
    labels: &[LabelId],
    reps: &[SparseVector],
    dim: usize,
    corr: Option<&LabelCorrelation>,
    seed: u64,
) -> Result<Split> {
    let left_size = labels.len().div_ceil(2);
    match corr {
        Some(c) => {
            let smoothed = smooth_with_correlation(reps, c);
            balanced_split_with_size(labels, &smoothed, dim, left_size, seed)
        }
        None => balanced_split_with_size(labels, reps, dim, left_size, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        left: usize,
        right: usize,
        mean_left: SparseVector,
        mean_right: SparseVector,
    },
    Leaf {
        cluster: usize,
    },
}

/// Binary partition tree over the labels that have positives.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    pub num_labels: usize,
    /// `nodes[0]` is the root.
    pub nodes: Vec<TreeNode>,
    /// Label ids of every leaf, sorted, in left-to-right order.
    pub leaves: Vec<Vec<LabelId>>,
    /// Labels without positives; mapped to cluster 0.
    pub empty_labels: Vec<LabelId>,
    pub depth: usize,
    pub seed: u64,
}

impl ClusterTree {
    pub fn num_clusters(&self) -> usize {
        self.leaves.len()
    }

    /// Cluster id of every label; `u32::MAX` marks labels the tree never saw.
    pub fn label_to_cluster(&self) -> Vec<u32> {
        let mut map = vec![u32::MAX; self.num_labels];
        for (c, leaf) in self.leaves.iter().enumerate() {
            for &l in leaf {
                map[l as usize] = c as u32;
            }
        }
        for &l in &self.empty_labels {
            map[l as usize] = 0;
        }
        map
    }

    /// Rebuilds a tree with only leaf information (as read back from JSON).
    pub fn from_leaves(num_labels: usize, leaves: Vec<Vec<LabelId>>, empty_labels: Vec<LabelId>, depth: usize, seed: u64) -> Self {
        let nodes = (0..leaves.len()).map(|c| TreeNode::Leaf { cluster: c }).collect();
        Self {
            num_labels,
            nodes,
            leaves,
            empty_labels,
            depth,
            seed,
        }
    }
}

fn sparse_of(dense: &[f64]) -> SparseVector {
    let (idx, val): (Vec<u32>, Vec<f64>) = dense
        .iter()
        .enumerate()
        .filter(|p| *p.1 != 0.0)
        .map(|(i, &v)| (i as u32, v))
        .unzip();
    SparseVector::from_parts(idx, val).expect("dense to sparse")
}

/// Recursively splits the non-empty labels until `num_clusters` leaves remain.
/// A node that must produce `t` leaves sends `⌈t/2⌉` of them left together with
/// a proportional share of its labels, so powers of two give perfectly
/// balanced siblings.
pub fn build_cluster_tree(
    cent: &LabelCentroids,
    corr: Option<&LabelCorrelation>,
    num_clusters: usize,
    seed: u64,
) -> Result<ClusterTree> {
    let empty_labels = cent.empty_labels();
    let active: Vec<LabelId> = (0..cent.num_labels() as LabelId)
        .filter(|&l| !cent.rows[l as usize].is_empty())
        .collect();
    if num_clusters == 0 || num_clusters > active.len() {
        return Err(Error::InvalidParam(alloc::format!(
            "{num_clusters} clusters requested for {} non-empty labels",
            active.len()
        )));
    }
    let smoothed;
    let reps: &[SparseVector] = match corr {
        Some(c) => {
            smoothed = smooth_with_correlation(&cent.rows, c);
            &smoothed
        }
        None => &cent.rows,
    };

    struct Pending {
        node: usize,
        labels: Vec<LabelId>,
        target: usize,
        depth: usize,
        path: u64,
    }
    let mut nodes = vec![TreeNode::Leaf { cluster: usize::MAX }];
    let mut leaves = Vec::new();
    let mut depth = 0;
    // Depth-first, left child processed first so leaves come out in order.
    let mut stack = vec![Pending {
        node: 0,
        labels: active,
        target: num_clusters,
        depth: 0,
        path: 1,
    }];
    while let Some(p) = stack.pop() {
        depth = depth.max(p.depth);
        if p.target == 1 {
            nodes[p.node] = TreeNode::Leaf { cluster: leaves.len() };
            leaves.push(p.labels);
            continue;
        }
        let t_left = p.target.div_ceil(2);
        let left_size = (p.labels.len() * t_left).div_ceil(p.target);
        let split_seed = seed ^ p.path.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let s = balanced_split_with_size(&p.labels, reps, cent.dim, left_size, split_seed)?;
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(TreeNode::Leaf { cluster: usize::MAX });
        nodes.push(TreeNode::Leaf { cluster: usize::MAX });
        nodes[p.node] = TreeNode::Internal {
            left: l,
            right: r,
            mean_left: sparse_of(&s.mean_left),
            mean_right: sparse_of(&s.mean_right),
        };
        stack.push(Pending {
            node: r,
            labels: s.right,
            target: p.target - t_left,
            depth: p.depth + 1,
            path: p.path * 2 + 1,
        });
        stack.push(Pending {
            node: l,
            labels: s.left,
            target: t_left,
            depth: p.depth + 1,
            path: p.path * 2,
        });
    }
    Ok(ClusterTree {
        num_labels: cent.num_labels(),
        nodes,
        leaves,
        empty_labels,
        depth,
        seed,
    })
}

/// Per-point meta-label sets: cluster `k` is positive for point `i` iff some
/// positive label of `i` lies in cluster `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaLabelMap {
    pub num_clusters: usize,
    pub label_to_cluster: Vec<u32>,
    pub meta: Vec<Vec<u32>>,
}

pub fn make_meta_labels(d: &Dataset, tree: &ClusterTree) -> Result<MetaLabelMap> {
    let map = tree.label_to_cluster();
    meta_labels_from_map(d, map, tree.num_clusters())
}

/// Same as [`make_meta_labels`] from an explicit label → cluster map.
pub fn meta_labels_from_map(d: &Dataset, label_to_cluster: Vec<u32>, num_clusters: usize) -> Result<MetaLabelMap> {
    let mut meta = Vec::with_capacity(d.num_points());
    for ls in d.labels() {
        let mut m = Vec::with_capacity(ls.len());
        for &l in ls {
            match label_to_cluster.get(l as usize) {
                Some(&c) if (c as usize) < num_clusters => m.push(c),
                _ => return Err(Error::UncoveredLabel(l)),
            }
        }
        m.sort_unstable();
        m.dedup();
        meta.push(m);
    }
    Ok(MetaLabelMap {
        num_clusters,
        label_to_cluster,
        meta,
    })
}

/// The most frequent labels as an alternative surrogate label set.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentLabels {
    /// Selected ids, ascending.
    pub labels: Vec<LabelId>,
    /// Fraction of the vocabulary occurring in at least one point that has a
    /// selected label.
    pub token_coverage: f64,
}

pub fn select_frequent_labels(d: &Dataset, count: usize) -> Result<FrequentLabels> {
    if count > d.num_labels() {
        return Err(Error::InvalidParam(alloc::format!(
            "{count} labels requested out of {}",
            d.num_labels()
        )));
    }
    let freq = d.label_frequencies();
    let mut order: Vec<LabelId> = (0..d.num_labels() as LabelId).collect();
    order.sort_by(|&a, &b| freq[b as usize].cmp(&freq[a as usize]).then(a.cmp(&b)));
    let mut labels = order[..count].to_vec();
    labels.sort_unstable();
    let mut selected = vec![false; d.num_labels()];
    labels.iter().for_each(|&l| selected[l as usize] = true);
    let mut seen = vec![false; d.num_features()];
    for (i, ls) in d.labels().iter().enumerate() {
        if ls.iter().any(|&l| selected[l as usize]) {
            for &t in d.feature(i).indices() {
                seen[t as usize] = true;
            }
        }
    }
    let covered = seen.iter().filter(|&&s| s).count();
    Ok(FrequentLabels {
        labels,
        token_coverage: covered as f64 / d.num_features() as f64,
    })
}

/// Share of labels whose leaf's majority planted cluster matches their own.
pub fn purity(leaves: &[Vec<LabelId>], truth: impl Fn(LabelId) -> u32) -> f64 {
    let mut agree = 0usize;
    let mut total = 0usize;
    for leaf in leaves {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in leaf {
            *counts.entry(truth(l)).or_insert(0) += 1;
        }
        agree += counts.values().copied().max().unwrap_or(0);
        total += leaf.len();
    }
    if total == 0 {
        0.0
    } else {
        agree as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_rep(v: &[f64]) -> SparseVector {
        let mut s = SparseVector::from_pairs(v.iter().enumerate().map(|(i, &x)| (i as u32, x)).collect());
        s.normalize();
        s
    }

    #[test]
    fn centroid_of_single_point() {
        let d = Dataset::new(2, 2, vec![SparseVector::from_pairs(vec![(0, 3.0), (1, 4.0)])], vec![vec![0]]).unwrap();
        let c = compute_centroids(&d);
        assert!((c.rows[0].values()[0] - 0.6).abs() < 1e-15);
        assert!((c.rows[0].values()[1] - 0.8).abs() < 1e-15);
        assert_eq!(c.empty_labels(), vec![1]);
    }

    #[test]
    fn centroid_of_two_orthogonal_points() {
        let d = Dataset::new(
            2,
            1,
            vec![
                SparseVector::from_pairs(vec![(0, 1.0)]),
                SparseVector::from_pairs(vec![(1, 1.0)]),
            ],
            vec![vec![0], vec![0]],
        )
        .unwrap();
        let c = compute_centroids(&d);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!(c.rows[0].values().iter().all(|v| (v - h).abs() < 1e-15));
    }

    #[test]
    fn separable_pairs_split_apart() {
        let e = 0.01;
        let reps = vec![
            dense_rep(&[1.0, 0.0]),
            dense_rep(&[1.0, e]),
            dense_rep(&[0.0, 1.0]),
            dense_rep(&[e, 1.0]),
        ];
        for seed in 0..10 {
            let s = balanced_2means_split(&[0, 1, 2, 3], &reps, 2, None, seed).unwrap();
            let mut sides = [s.left.clone(), s.right.clone()];
            sides.sort();
            assert_eq!(sides, [vec![0, 1], vec![2, 3]]);
        }
    }

    #[test]
    fn odd_count_gives_two_and_one() {
        let reps = vec![dense_rep(&[1.0, 0.0]), dense_rep(&[0.0, 1.0]), dense_rep(&[1.0, 1.0])];
        let s = balanced_2means_split(&[0, 1, 2], &reps, 2, None, 3).unwrap();
        assert_eq!((s.left.len(), s.right.len()), (2, 1));
    }

    #[test]
    fn all_zero_reps_are_degenerate() {
        let reps = vec![SparseVector::new(), SparseVector::new()];
        assert!(matches!(
            balanced_2means_split(&[0, 1], &reps, 2, None, 0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn single_cluster_tree_holds_everything() {
        let reps: Vec<SparseVector> = (0..5).map(|i| dense_rep(&[1.0, i as f64])).collect();
        let cent = LabelCentroids { dim: 2, rows: reps };
        let t = build_cluster_tree(&cent, None, 1, 0).unwrap();
        assert_eq!(t.leaves, vec![vec![0, 1, 2, 3, 4]]);
        assert!(build_cluster_tree(&cent, None, 6, 0).is_err());
        assert!(build_cluster_tree(&cent, None, 0, 0).is_err());
    }

    #[test]
    fn meta_labels_collapse_within_cluster() {
        let d = Dataset::new(1, 8, vec![SparseVector::new(), SparseVector::new()], vec![vec![3, 7], vec![]]).unwrap();
        let mut map = vec![0u32; 8];
        map[3] = 2;
        map[7] = 2;
        let m = meta_labels_from_map(&d, map, 3).unwrap();
        assert_eq!(m.meta, vec![vec![2], vec![]]);
        let bad = meta_labels_from_map(&d, vec![u32::MAX; 8], 3);
        assert_eq!(bad, Err(Error::UncoveredLabel(3)));
    }

    #[test]
    fn frequent_labels_break_ties_by_id() {
        // frequencies (5, 3, 3, 1)
        let mut labels = vec![vec![0, 1, 2, 3]];
        labels.extend((0..2).map(|_| vec![0, 1, 2]));
        labels.extend((0..2).map(|_| vec![0]));
        let feats = (0..5).map(|i| SparseVector::from_pairs(vec![(i as u32, 1.0)])).collect();
        let d = Dataset::new(6, 4, feats, labels).unwrap();
        let f = select_frequent_labels(&d, 2).unwrap();
        assert_eq!(f.labels, vec![0, 1]);
        let all = select_frequent_labels(&d, 4).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3]);
        assert!((all.token_coverage - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_label_correlation_is_identity() {
        let d = Dataset::new(1, 1, vec![SparseVector::new(); 3], vec![vec![0]; 3]).unwrap();
        let c = estimate_correlation(&d, 10, 2, 100, 0).unwrap();
        assert_eq!(c.rows[0], vec![(0, 1.0)]);
    }
}
