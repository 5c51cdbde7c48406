//! Hard-negative shortlists from two HNSW indices: one over documents (labels
//! of neighbouring documents) and one over label representatives.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hnsw::{HnswIndex, HnswParams, Scratch};
use crate::math;
use crate::nn::{self, EmbeddingBank};
use crate::spectral::ResidualBlock;
use crate::LabelId;

/// Dense per-document features plus their unit-normalised copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEmbedding {
    pub dim: usize,
    /// Unnormalised features, one per point.
    pub raw: Vec<Vec<f64>>,
    /// Row-major unit vectors; zero rows stay zero.
    pub unit: Vec<f64>,
    /// `false` for points whose feature vector is exactly zero.
    pub nonzero: Vec<bool>,
}

impl CorpusEmbedding {
    pub fn from_vectors(dim: usize, raw: Vec<Vec<f64>>) -> Self {
        let mut unit = Vec::with_capacity(raw.len() * dim);
        let mut nonzero = Vec::with_capacity(raw.len());
        for v in &raw {
            let mut u = v.clone();
            nonzero.push(math::normalize(&mut u) > 0.0);
            unit.extend(u);
        }
        Self {
            dim,
            raw,
            unit,
            nonzero,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn unit_row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    pub fn zero_count(&self) -> usize {
        self.nonzero.iter().filter(|&&n| !n).count()
    }
}

/// `v_i = ReLU(Σ_t x_it e_t)` for every point.
pub fn embed_corpus(d: &Dataset, e: &EmbeddingBank) -> Result<CorpusEmbedding> {
    let raw = d
        .features()
        .iter()
        .map(|x| nn::embed_bag(x, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusEmbedding::from_vectors(e.dim(), raw))
}

/// Final features `x̂_i = v_i + ReLU(R v_i)` for every point.
pub fn embed_corpus_final(d: &Dataset, e: &EmbeddingBank, block: &ResidualBlock) -> Result<CorpusEmbedding> {
    let raw = d
        .features()
        .iter()
        .map(|x| nn::features(x, e, block).map(|p| p.1))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusEmbedding::from_vectors(e.dim(), raw))
}

/// Unit label representatives: one centroid per label with positives, plus
/// spherical k-means centres for the most frequent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRepresentatives {
    pub dim: usize,
    pub num_labels: usize,
    /// Row-major unit vectors.
    pub vectors: Vec<f64>,
    /// Owning label of each row.
    pub owner: Vec<LabelId>,
    /// Row holding each label's centroid, if it has one.
    pub centroid_row: Vec<Option<u32>>,
    /// Head labels and the number of extra centres they received.
    pub heads: Vec<(LabelId, usize)>,
}

impl LabelRepresentatives {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub fn centroid(&self, l: LabelId) -> Option<&[f64]> {
        self.centroid_row[l as usize].map(|r| self.row(r as usize))
    }

    fn push(&mut self, label: LabelId, v: &[f64]) -> u32 {
        self.vectors.extend_from_slice(v);
        self.owner.push(label);
        (self.owner.len() - 1) as u32
    }
}

/// Centroids `μ⁰_l = normalize(mean_{i∈P_l} v_i)` over the raw features; the
/// `head_count` most frequent labels additionally get `centers_per_head`
/// spherical k-means centres over their positives (none when it is 1).
pub fn label_representatives(
    d: &Dataset,
    corpus: &CorpusEmbedding,
    head_count: usize,
    centers_per_head: usize,
    seed: u64,
) -> LabelRepresentatives {
    let dim = corpus.dim;
    let label_points = d.label_points();
    let mut reps = LabelRepresentatives {
        dim,
        num_labels: d.num_labels(),
        vectors: Vec::new(),
        owner: Vec::new(),
        centroid_row: vec![None; d.num_labels()],
        heads: Vec::new(),
    };
    for (l, pts) in label_points.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for &i in pts {
            math::axpy(1.0 / pts.len() as f64, &corpus.raw[i as usize], &mut mean);
        }
        if math::normalize(&mut mean) > 0.0 {
            reps.centroid_row[l] = Some(reps.push(l as LabelId, &mean));
        }
    }
    if centers_per_head >= 2 && head_count > 0 {
        let mut order: Vec<usize> = (0..d.num_labels()).filter(|&l| !label_points[l].is_empty()).collect();
        order.sort_by(|&a, &b| label_points[b].len().cmp(&label_points[a].len()).then(a.cmp(&b)));
        order.truncate(head_count);
        for l in order {
            let members: Vec<&[f64]> = label_points[l]
                .iter()
                .filter(|&&i| corpus.nonzero[i as usize])
                .map(|&i| corpus.unit_row(i as usize))
                .collect();
            let k = centers_per_head.min(members.len());
            if k < 2 {
                continue;
            }
            let centers = spherical_kmeans(&members, dim, k, seed ^ (l as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
            for c in centers.chunks_exact(dim) {
                reps.push(l as LabelId, c);
            }
            reps.heads.push((l as LabelId, k));
        }
    }
    reps
}

/// Spherical k-means (cosine assignment, normalised-sum centres) with
/// k-means++ seeding; returns `k` row-major unit centres.
pub fn spherical_kmeans(points: &[&[f64]], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<f64> = Vec::with_capacity(k * dim);
    centers.extend_from_slice(points[rng.gen_range(0..points.len())]);
    while centers.len() < k * dim {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                let best = centers
                    .chunks_exact(dim)
                    .map(|c| math::dot(p, c))
                    .fold(f64::NEG_INFINITY, f64::max);
                let d = (1.0 - best).max(0.0);
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centers.extend_from_slice(points[pick]);
    }
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::NEG_INFINITY, 0);
            for (c, cv) in centers.chunks_exact(dim).enumerate() {
                let s = math::dot(p, cv);
                if s > best.0 {
                    best = (s, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        for (i, p) in points.iter().enumerate() {
            math::axpy(1.0, p, &mut sums[assign[i] * dim..(assign[i] + 1) * dim]);
        }
        for c in 0..k {
            let s = &mut sums[c * dim..(c + 1) * dim];
            if math::normalize(s) > 0.0 {
                centers[c * dim..(c + 1) * dim].copy_from_slice(s);
            }
        }
    }
    centers
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Doc,
    Centroid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub label: LabelId,
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    pub doc_route: usize,
    pub centroid_route: usize,
    pub random: usize,
    pub total: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            doc_route: 300,
            centroid_route: 300,
            random: 50,
            total: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortlistParams {
    pub caps: Caps,
    /// Documents retrieved per query on the document route.
    pub doc_neighbors: usize,
    pub ef_search: usize,
}

impl Default for ShortlistParams {
    fn default() -> Self {
        Self {
            caps: Caps::default(),
            doc_neighbors: 100,
            ef_search: 200,
        }
    }
}

/// Per-point shortlists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortlist {
    pub num_labels: usize,
    pub rows: Vec<Vec<Entry>>,
}

impl Shortlist {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self, i: usize) -> impl Iterator<Item = LabelId> + '_ {
        self.rows[i].iter().map(|e| e.label)
    }

    pub fn max_len(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// The two indices plus everything needed to turn neighbours into labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Shortlister {
    pub params: ShortlistParams,
    pub num_labels: usize,
    pub doc_index: HnswIndex,
    /// Point id of every document-index node.
    pub doc_ids: Vec<u32>,
    /// Training labels of every point (indexed by point id).
    pub doc_labels: Vec<Vec<LabelId>>,
    pub rep_index: HnswIndex,
    pub rep_owner: Vec<LabelId>,
    /// Centroid row of each label inside `rep_index`.
    pub centroid_row: Vec<Option<u32>>,
}

impl Shortlister {
    /// Indexes the non-zero documents of `corpus` and all representatives.
    pub fn build(
        d: &Dataset,
        corpus: &CorpusEmbedding,
        reps: &LabelRepresentatives,
        hnsw: HnswParams,
        params: ShortlistParams,
    ) -> Result<Self> {
        if corpus.len() != d.num_points() {
            return Err(Error::ShapeMismatch("corpus vs dataset size".into()));
        }
        let mut doc_ids = Vec::new();
        let mut vectors = Vec::new();
        for i in 0..corpus.len() {
            if corpus.nonzero[i] {
                doc_ids.push(i as u32);
                vectors.extend_from_slice(corpus.unit_row(i));
            }
        }
        let doc_index = HnswIndex::build(corpus.dim, &vectors, hnsw)?;
        let rep_index = HnswIndex::build(
            corpus.dim,
            &reps.vectors,
            HnswParams {
                seed: hnsw.seed.wrapping_add(1),
                ..hnsw
            },
        )?;
        Ok(Self {
            params,
            num_labels: d.num_labels(),
            doc_index,
            doc_ids,
            doc_labels: d.labels().to_vec(),
            rep_index,
            rep_owner: reps.owner.clone(),
            centroid_row: reps.centroid_row.clone(),
        })
    }

    /// Shortlist for one query vector (unit norm, or zero).
    ///
    /// With `positives = Some(P)` (training) labels in `P` are excluded and up
    /// to `caps.random` uniform random negatives are appended; `self_doc` is
    /// dropped from the document route. With `None` (prediction) nothing is
    /// excluded and no random entries are drawn.
    pub fn shortlist_point(
        &self,
        q: &[f64],
        positives: Option<&[LabelId]>,
        self_doc: Option<u32>,
        rng: &mut ChaCha8Rng,
        scratch: &mut Scratch,
    ) -> Vec<Entry> {
        self.shortlist_point_with(&self.params, q, positives, self_doc, rng, scratch)
    }

    /// [`Self::shortlist_point`] with caps and beam width taken from `params`.
    pub fn shortlist_point_with(
        &self,
        params: &ShortlistParams,
        q: &[f64],
        positives: Option<&[LabelId]>,
        self_doc: Option<u32>,
        rng: &mut ChaCha8Rng,
        scratch: &mut Scratch,
    ) -> Vec<Entry> {
        let caps = params.caps;
        let excluded = |l: LabelId| positives.is_some_and(|p| p.binary_search(&l).is_ok());
        let is_zero = q.iter().all(|&x| x == 0.0);
        let mut merged: BTreeMap<LabelId, (f64, Source)> = BTreeMap::new();

        if !is_zero && !self.doc_index.is_empty() && caps.doc_route > 0 {
            let k = (params.doc_neighbors + usize::from(self_doc.is_some())).min(self.doc_index.len());
            let ef = params.ef_search.max(k);
            let mut route: BTreeMap<LabelId, f64> = BTreeMap::new();
            for (node, sim) in self.doc_index.query_with(q, k, ef, scratch) {
                let doc = self.doc_ids[node as usize];
                if Some(doc) == self_doc {
                    continue;
                }
                for &l in &self.doc_labels[doc as usize] {
                    if !excluded(l) {
                        let s = route.entry(l).or_insert(f64::NEG_INFINITY);
                        *s = s.max(sim);
                    }
                }
            }
            for (l, s) in top_by_score(route, caps.doc_route) {
                merged.insert(l, (s, Source::Doc));
            }
        }
        if !is_zero && !self.rep_index.is_empty() && caps.centroid_route > 0 {
            let extra = positives.map_or(0, <[LabelId]>::len);
            let k = (2 * caps.centroid_route + extra).min(self.rep_index.len());
            let ef = params.ef_search.max(k);
            let mut route: BTreeMap<LabelId, f64> = BTreeMap::new();
            for (node, sim) in self.rep_index.query_with(q, k, ef, scratch) {
                let l = self.rep_owner[node as usize];
                if !excluded(l) {
                    let s = route.entry(l).or_insert(f64::NEG_INFINITY);
                    *s = s.max(sim);
                }
            }
            for (l, s) in top_by_score(route, caps.centroid_route) {
                let e = merged.entry(l).or_insert((s, Source::Centroid));
                if s > e.0 {
                    *e = (s, Source::Centroid);
                }
            }
        }
        let mut out: Vec<Entry> = merged
            .into_iter()
            .map(|(label, (score, source))| Entry { label, score, source })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.label.cmp(&b.label)));

        if let Some(pos) = positives {
            let available = self.num_labels - pos.len();
            let want = caps.random.min(available.saturating_sub(out.len()));
            let mut taken: Vec<LabelId> = out.iter().map(|e| e.label).collect();
            taken.sort_unstable();
            let mut drawn = Vec::with_capacity(want);
            let mut attempts = 0;
            while drawn.len() < want && attempts < 20 * caps.random.max(1) {
                attempts += 1;
                let l = rng.gen_range(0..self.num_labels) as LabelId;
                if excluded(l) || taken.binary_search(&l).is_ok() || drawn.iter().any(|e: &Entry| e.label == l) {
                    continue;
                }
                let score = match self.centroid_row[l as usize] {
                    Some(r) if !is_zero => math::dot(q, self.rep_index.vector(r)),
                    _ => 0.0,
                };
                drawn.push(Entry {
                    label: l,
                    score,
                    source: Source::Random,
                });
            }
            out.extend(drawn);
        }
        out.truncate(caps.total);
        out
    }

    /// Training shortlists for every point of `d`, queried with `corpus`.
    pub fn training_shortlists(&self, d: &Dataset, corpus: &CorpusEmbedding, seed: u64) -> Shortlist {
        let mut scratch = Scratch::default();
        let rows = (0..d.num_points())
            .map(|i| {
                let mut rng = point_rng(seed, i);
                self.shortlist_point(corpus.unit_row(i), Some(d.point_labels(i)), Some(i as u32), &mut rng, &mut scratch)
            })
            .collect();
        Shortlist {
            num_labels: d.num_labels(),
            rows,
        }
    }

    /// Prediction-style shortlists (no exclusions, no random entries).
    pub fn query_shortlists(&self, corpus: &CorpusEmbedding) -> Shortlist {
        let mut scratch = Scratch::default();
        let mut rng = point_rng(0, 0);
        let rows = (0..corpus.len())
            .map(|i| self.shortlist_point(corpus.unit_row(i), None, None, &mut rng, &mut scratch))
            .collect();
        Shortlist {
            num_labels: self.num_labels,
            rows,
        }
    }
}

fn top_by_score(route: BTreeMap<LabelId, f64>, cap: usize) -> Vec<(LabelId, f64)> {
    let mut v: Vec<(LabelId, f64)> = route.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(cap);
    v
}

/// Independent random stream for point `i`, so per-point work can be
/// scheduled in any order.
pub fn point_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Baseline negative sources used by the sampler ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Anns,
    Uniform,
    Unigram,
}

/// Random negatives per point: `sizes[i]` labels not in `P_i`, drawn
/// uniformly (`Uniform`) or proportionally to training frequency (`Unigram`).
pub fn sampled_shortlists(d: &Dataset, sizes: &[usize], sampler: Sampler, seed: u64) -> Result<Shortlist> {
    if sizes.len() != d.num_points() {
        return Err(Error::ShapeMismatch("one size per point required".into()));
    }
    let freq = d.label_frequencies();
    let mut cumulative = Vec::with_capacity(freq.len());
    let mut acc = 0.0;
    for &f in &freq {
        acc += f as f64;
        cumulative.push(acc);
    }
    let mut rows = Vec::with_capacity(d.num_points());
    for (i, &want) in sizes.iter().enumerate() {
        let pos = d.point_labels(i);
        let mut rng = point_rng(seed, i);
        let pool = match sampler {
            Sampler::Unigram => freq.iter().filter(|&&f| f > 0).count(),
            _ => d.num_labels(),
        } - pos.len();
        let want = want.min(pool);
        let mut row: Vec<Entry> = Vec::with_capacity(want);
        let mut attempts = 0;
        while row.len() < want && attempts < 50 * want.max(1) {
            attempts += 1;
            let l = match sampler {
                Sampler::Unigram => {
                    let t = rng.gen::<f64>() * acc;
                    cumulative.partition_point(|&c| c <= t).min(freq.len() - 1) as LabelId
                }
                _ => rng.gen_range(0..d.num_labels()) as LabelId,
            };
            if pos.binary_search(&l).is_ok() || row.iter().any(|e| e.label == l) {
                continue;
            }
            row.push(Entry {
                label: l,
                score: 0.0,
                source: Source::Random,
            });
        }
        rows.push(row);
    }
    Ok(Shortlist {
        num_labels: d.num_labels(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    /// Mean over points with at least one positive.
    pub mean_recall: f64,
    pub points_evaluated: usize,
    pub points_without_labels: usize,
    pub mean_shortlist_len: f64,
    pub max_shortlist_len: usize,
}

/// Fraction of each point's positives present in its shortlist.
pub fn shortlist_recall(sl: &Shortlist, truth: &Dataset) -> Result<RecallReport> {
    if sl.len() != truth.num_points() {
        return Err(Error::ShapeMismatch("shortlist vs truth size".into()));
    }
    let mut sum = 0.0;
    let mut evaluated = 0;
    for i in 0..sl.len() {
        let pos = truth.point_labels(i);
        if pos.is_empty() {
            continue;
        }
        let hits = pos.iter().filter(|l| sl.rows[i].iter().any(|e| e.label == **l)).count();
        sum += hits as f64 / pos.len() as f64;
        evaluated += 1;
    }
    let total_len: usize = sl.rows.iter().map(Vec::len).sum();
    Ok(RecallReport {
        mean_recall: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
        points_evaluated: evaluated,
        points_without_labels: sl.len() - evaluated,
        mean_shortlist_len: if sl.is_empty() { 0.0 } else { total_len as f64 / sl.len() as f64 },
        max_shortlist_len: sl.max_len(),
    })
}

/// Mean per-point Jaccard overlap of two shortlists' label sets (two empty
/// rows count as identical).
pub fn shortlist_overlap(a: &Shortlist, b: &Shortlist) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("shortlists of different lengths".into()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for i in 0..a.len() {
        let mut x: Vec<LabelId> = a.labels(i).collect();
        let mut y: Vec<LabelId> = b.labels(i).collect();
        x.sort_unstable();
        y.sort_unstable();
        let inter = x.iter().filter(|l| y.binary_search(l).is_ok()).count();
        let union = x.len() + y.len() - inter;
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(rows: Vec<Vec<LabelId>>) -> Shortlist {
        Shortlist {
            num_labels: 10,
            rows: rows
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .map(|label| Entry {
                            label,
                            score: 0.0,
                            source: Source::Doc,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn overlap_extremes() {
        assert_eq!(shortlist_overlap(&sl(vec![vec![1, 2]]), &sl(vec![vec![3]])).unwrap(), 0.0);
        assert_eq!(shortlist_overlap(&sl(vec![vec![1, 2]]), &sl(vec![vec![2, 1]])).unwrap(), 1.0);
        assert_eq!(shortlist_overlap(&sl(vec![vec![1, 2]]), &sl(vec![vec![2]])).unwrap(), 0.5);
    }

    #[test]
    fn recall_of_full_shortlist_is_one() {
        let d = Dataset::new(1, 10, vec![Default::default()], vec![vec![1, 4]]).unwrap();
        let r = shortlist_recall(&sl(vec![vec![4, 1, 7]]), &d).unwrap();
        assert_eq!(r.mean_recall, 1.0);
        let r = shortlist_recall(&sl(vec![vec![4]]), &d).unwrap();
        assert_eq!(r.mean_recall, 0.5);
    }

    #[test]
    fn corpus_flags_zero_vectors() {
        let c = CorpusEmbedding::from_vectors(2, vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(c.nonzero, vec![false, true]);
        assert_eq!(c.unit_row(1), &[0.6, 0.8]);
        assert_eq!(c.zero_count(), 1);
    }

    #[test]
    fn sampled_shortlists_avoid_positives() {
        let d = Dataset::new(1, 6, vec![Default::default(); 3], vec![vec![0, 1], vec![2], vec![0, 1, 2, 3, 4, 5]]).unwrap();
        for s in [Sampler::Uniform, Sampler::Unigram] {
            let out = sampled_shortlists(&d, &[3, 10, 4], s, 1).unwrap();
            for (i, row) in out.rows.iter().enumerate() {
                assert!(row.iter().all(|e| !d.is_positive(i, e.label)));
            }
            assert_eq!(out.rows[2].len(), 0);
        }
    }
}
