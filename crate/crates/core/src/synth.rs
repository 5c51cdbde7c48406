//! Planted-cluster datasets for tests and desk-scale benchmarks.
//!
//! Cluster `c` owns vocabulary block `[c·vpc, (c+1)·vpc)` and label block
//! `[c·lpc, (c+1)·lpc)`. Inside a vocabulary block every label owns a slice of
//! `max(1, vpc/lpc)` tokens; documents draw most home tokens from the slices of
//! their own labels so that labels are separable within a cluster.

use alloc::vec::Vec;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Share of home-block tokens drawn from the document's own label slices.
const LABEL_TOKEN_SHARE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub num_clusters: usize,
    pub docs_per_cluster: usize,
    pub labels_per_cluster: usize,
    pub vocab_per_cluster: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(
        num_clusters: usize,
        docs_per_cluster: usize,
        labels_per_cluster: usize,
        vocab_per_cluster: usize,
        noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_clusters,
            docs_per_cluster,
            labels_per_cluster,
            vocab_per_cluster,
            noise,
            seed,
        }
    }
}

/// Generated dataset together with its planted structure.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub params: SynthParams,
    /// Planted cluster of every document.
    pub doc_cluster: Vec<u32>,
}

impl Synthetic {
    pub fn label_cluster(&self, label: u32) -> u32 {
        label / self.params.labels_per_cluster as u32
    }

    pub fn feature_cluster(&self, feature: u32) -> u32 {
        feature / self.params.vocab_per_cluster as u32
    }
}

pub fn synth_dataset(p: SynthParams) -> Result<Synthetic> {
    if p.num_clusters == 0
        || p.docs_per_cluster == 0
        || p.labels_per_cluster == 0
        || p.vocab_per_cluster == 0
    {
        return Err(Error::InvalidParam("all counts must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&p.noise) {
        return Err(Error::InvalidParam("noise must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let vpc = p.vocab_per_cluster;
    let lpc = p.labels_per_cluster;
    let slice = (vpc / lpc).max(1);
    let n = p.num_clusters * p.docs_per_cluster;

    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut doc_cluster = Vec::with_capacity(n);
    for c in 0..p.num_clusters {
        for _ in 0..p.docs_per_cluster {
            let k = rng.gen_range(1..=lpc.min(3));
            let mut local: Vec<usize> = index::sample(&mut rng, lpc, k).into_vec();
            local.sort_unstable();

            let n_tokens = rng.gen_range(3..=10);
            let mut pairs = Vec::with_capacity(n_tokens);
            for _ in 0..n_tokens {
                let token = if p.num_clusters > 1 && rng.gen::<f64>() < p.noise {
                    let mut other = rng.gen_range(0..p.num_clusters - 1);
                    if other >= c {
                        other += 1;
                    }
                    other * vpc + rng.gen_range(0..vpc)
                } else if rng.gen::<f64>() < LABEL_TOKEN_SHARE {
                    let j = local[rng.gen_range(0..local.len())];
                    c * vpc + (j * slice + rng.gen_range(0..slice)) % vpc
                } else {
                    c * vpc + rng.gen_range(0..vpc)
                };
                pairs.push((token as u32, 1.0));
            }
            features.push(SparseVector::from_pairs(pairs));
            labels.push(local.iter().map(|&j| (c * lpc + j) as u32).collect());
            doc_cluster.push(c as u32);
        }
    }
    let dataset = Dataset::new(p.num_clusters * vpc, p.num_clusters * lpc, features, labels)?;
    Ok(Synthetic {
        dataset,
        params: p,
        doc_cluster,
    })
}
