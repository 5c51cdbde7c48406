//! Hierarchical navigable small-world graph over unit vectors, scored by
//! cosine similarity (inner product). Construction follows the usual recipe:
//! geometric level assignment with multiplier `1/ln M`, greedy descent through
//! upper layers, an `ef_construction` beam on the insertion layers and the
//! diversity heuristic for neighbour selection (pruned candidates back-fill
//! free slots). Ties are broken by lower node id everywhere so builds and
//! queries are reproducible.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Maximum out-degree on upper layers; layer 0 allows `2M`.
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            seed: 0,
        }
    }
}

/// Search candidate; `Ord` ranks better candidates higher.
#[derive(Debug, Clone, Copy)]
struct Cand {
    sim: f64,
    id: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then(other.id.cmp(&self.id))
    }
}

/// Reusable per-thread search scratch.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    stamp: Vec<u32>,
    generation: u32,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }

    #[inline]
    fn visit(&mut self, id: u32) -> bool {
        let s = &mut self.stamp[id as usize];
        if *s == self.generation {
            false
        } else {
            *s = self.generation;
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswIndex {
    dim: usize,
    params: HnswParams,
    vectors: Vec<f64>,
    levels: Vec<u8>,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self> {
        if params.m < 2 || params.ef_construction == 0 || dim == 0 {
            return Err(Error::InvalidParam("HNSW needs M >= 2, efC >= 1, dim >= 1".into()));
        }
        Ok(Self {
            dim,
            params,
            vectors: Vec::new(),
            levels: Vec::new(),
            links: Vec::new(),
            entry: None,
            max_level: 0,
        })
    }

    /// Builds an index over `vectors` (row-major, `dim` columns), inserting in
    /// row order.
    pub fn build(dim: usize, vectors: &[f64], params: HnswParams) -> Result<Self> {
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch("vector payload not a multiple of dim".into()));
        }
        let mut idx = Self::new(dim, params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut scratch = Scratch::default();
        for row in vectors.chunks_exact(dim) {
            let level = idx.draw_level(&mut rng);
            idx.insert(row, level, &mut scratch);
        }
        Ok(idx)
    }

    fn draw_level(&self, rng: &mut ChaCha8Rng) -> usize {
        let mult = 1.0 / math::ln(self.params.m as f64);
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        ((-math::ln(u) * mult) as usize).min(MAX_LEVEL)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn vector(&self, id: u32) -> &[f64] {
        &self.vectors[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn neighbors(&self, id: u32, layer: usize) -> &[u32] {
        self.links[id as usize].get(layer).map_or(&[], |v| v.as_slice())
    }

    pub fn level(&self, id: u32) -> usize {
        self.levels[id as usize] as usize
    }

    pub fn entry_point(&self) -> Option<u32> {
        self.entry
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    #[inline]
    fn sim_to(&self, q: &[f64], id: u32) -> f64 {
        math::dot(q, self.vector(id))
    }

    fn insert(&mut self, v: &[f64], level: usize, scratch: &mut Scratch) {
        let id = self.levels.len() as u32;
        self.vectors.extend_from_slice(v);
        self.levels.push(level as u8);
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = self.vector(id).to_vec();
        let mut eps = vec![Cand {
            sim: self.sim_to(&q, entry),
            id: entry,
        }];
        for layer in (level + 1..=self.max_level).rev() {
            eps = self.search_layer(&q, &eps, 1, layer, scratch);
        }
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&q, &eps, self.params.ef_construction, layer, scratch);
            let chosen = self.select_neighbors(&q, &found, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();
            for c in &chosen {
                self.link_back(c.id, id, layer);
            }
            eps = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    fn link_back(&mut self, node: u32, new: u32, layer: usize) {
        let cap = self.max_degree(layer);
        self.links[node as usize][layer].push(new);
        if self.links[node as usize][layer].len() <= cap {
            return;
        }
        let base = self.vector(node).to_vec();
        let mut cands: Vec<Cand> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Cand {
                sim: self.sim_to(&base, n),
                id: n,
            })
            .collect();
        cands.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&base, &cands, cap);
        self.links[node as usize][layer] = kept.iter().map(|c| c.id).collect();
    }

    /// Diversity heuristic over best-first `cands`: keep a candidate when it is
    /// closer to the base than to every kept neighbour, then back-fill with the
    /// pruned ones.
    fn select_neighbors(&self, _base: &[f64], cands: &[Cand], m: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut pruned: Vec<Cand> = Vec::new();
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.id);
            let diverse = kept.iter().all(|k| math::dot(cv, self.vector(k.id)) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Beam search on one layer; returns up to `ef` candidates best-first.
    fn search_layer(&self, q: &[f64], eps: &[Cand], ef: usize, layer: usize, scratch: &mut Scratch) -> Vec<Cand> {
        scratch.reset(self.len());
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        let mut best: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        for &e in eps {
            if scratch.visit(e.id) {
                frontier.push(e);
                best.push(Reverse(e));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        while let Some(c) = frontier.pop() {
            if best.len() >= ef {
                if let Some(Reverse(worst)) = best.peek() {
                    if c < *worst {
                        break;
                    }
                }
            }
            for &n in self.neighbors(c.id, layer) {
                if !scratch.visit(n) {
                    continue;
                }
                let cand = Cand {
                    sim: self.sim_to(q, n),
                    id: n,
                };
                let admit = best.len() < ef || best.peek().is_some_and(|Reverse(w)| cand > *w);
                if admit {
                    frontier.push(cand);
                    best.push(Reverse(cand));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = best.into_iter().map(|Reverse(c)| c).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate top-`k` by cosine, best first (ties to lower id). Exhaustive
    /// over the connected graph when `ef >= len()`.
    pub fn query(&self, q: &[f64], k: usize, ef: usize) -> Vec<(u32, f64)> {
        let mut scratch = Scratch::default();
        self.query_with(q, k, ef, &mut scratch)
    }

    pub fn query_with(&self, q: &[f64], k: usize, ef: usize, scratch: &mut Scratch) -> Vec<(u32, f64)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut eps = vec![Cand {
            sim: self.sim_to(q, entry),
            id: entry,
        }];
        for layer in (1..=self.max_level).rev() {
            eps = self.search_layer(q, &eps, 1, layer, scratch);
        }
        let found = self.search_layer(q, &eps, ef.max(k), 0, scratch);
        found.into_iter().take(k).map(|c| (c.id, c.sim)).collect()
    }

    /// Number of nodes reachable from the entry point on layer 0.
    pub fn reachable_count(&self) -> usize {
        let Some(entry) = self.entry else {
            return 0;
        };
        let mut seen = vec![false; self.len()];
        let mut stack = vec![entry];
        seen[entry as usize] = true;
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &m in self.neighbors(n, 0) {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    count += 1;
                    stack.push(m);
                }
            }
        }
        count
    }

    /// Raw parts for serialisation: vectors, levels, layer-major adjacency as
    /// `(node, layer, neighbours)` flattened to offsets + ids.
    pub fn to_parts(&self) -> HnswParts {
        let mut offsets = vec![0u64];
        let mut ids = Vec::new();
        for node in &self.links {
            for layer in node {
                ids.extend_from_slice(layer);
                offsets.push(ids.len() as u64);
            }
        }
        HnswParts {
            dim: self.dim,
            params: self.params,
            vectors: self.vectors.clone(),
            levels: self.levels.clone(),
            offsets,
            ids,
            entry: self.entry,
            max_level: self.max_level,
        }
    }

    pub fn from_parts(p: HnswParts) -> Result<Self> {
        let n = p.levels.len();
        if p.vectors.len() != n * p.dim {
            return Err(Error::ShapeMismatch("HNSW vectors vs levels".into()));
        }
        let lists: usize = p.levels.iter().map(|&l| l as usize + 1).sum();
        if p.offsets.len() != lists + 1 || *p.offsets.last().unwrap_or(&0) as usize != p.ids.len() {
            return Err(Error::ShapeMismatch("HNSW adjacency offsets".into()));
        }
        if p.ids.iter().any(|&i| i as usize >= n) || p.entry.is_some_and(|e| e as usize >= n) {
            return Err(Error::ShapeMismatch("HNSW neighbour id out of range".into()));
        }
        let mut links = Vec::with_capacity(n);
        let mut k = 0;
        for &l in &p.levels {
            let mut node = Vec::with_capacity(l as usize + 1);
            for _ in 0..=l {
                let (a, b) = (p.offsets[k] as usize, p.offsets[k + 1] as usize);
                node.push(p.ids[a..b].to_vec());
                k += 1;
            }
            links.push(node);
        }
        Ok(Self {
            dim: p.dim,
            params: p.params,
            vectors: p.vectors,
            levels: p.levels,
            links,
            entry: p.entry,
            max_level: p.max_level,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswParts {
    pub dim: usize,
    pub params: HnswParams,
    pub vectors: Vec<f64>,
    pub levels: Vec<u8>,
    pub offsets: Vec<u64>,
    pub ids: Vec<u32>,
    pub entry: Option<u32>,
    pub max_level: usize,
}

/// Free-function form of [`HnswIndex::build`].
pub fn build_hnsw(dim: usize, vectors: &[f64], m: usize, ef_construction: usize, seed: u64) -> Result<HnswIndex> {
    HnswIndex::build(
        dim,
        vectors,
        HnswParams {
            m,
            ef_construction,
            seed,
        },
    )
}
