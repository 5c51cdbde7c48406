//! Stage one: learn token embeddings on the meta-label task. The meta
//! classifiers and the stage's residual block are dropped afterwards; only
//! the embeddings move on.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::MetaLabelMap;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{ClassifierBank, EmbeddingBank};
use crate::spectral::ResidualBlock;
use crate::train::{self, Network, Targets, TrainHooks, TrainLog, TrainParams};
use crate::LabelId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub dim: usize,
    /// Number of meta-labels (label clusters).
    pub num_clusters: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    /// Share of points held out for the meta-P@1 diagnostic.
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            num_clusters: 1 << 13,
            lambda: 0.5,
            learning_rate: 0.005,
            batch_size: 256,
            epochs: 30,
            dropout: 0.5,
            heldout_fraction: 0.05,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParam("surrogate dim must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParam("surrogate lambda must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::InvalidParam("heldout_fraction must lie in [0, 1)".into()));
        }
        self.train_params().validate()
    }

    fn train_params(&self) -> TrainParams {
        TrainParams {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            dropout: self.dropout,
            seed: self.seed,
            train_embeddings: true,
            train_residual: true,
        }
    }
}

/// What stage one hands on: the embeddings only.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateModel {
    pub embeddings: EmbeddingBank,
}

#[derive(Debug, Clone)]
pub struct SurrogateOutcome {
    pub model: IntermediateModel,
    pub log: TrainLog,
    pub heldout: Vec<usize>,
    /// Meta classifiers and residual, kept only for diagnostics.
    pub transient: Network,
}

/// Token vectors: rows listed in `pretrained` are copied, every other row is
/// i.i.d. uniform(−1/√D, 1/√D).
pub fn init_embeddings(vocab: usize, dim: usize, pretrained: &[(u32, Vec<f64>)], seed: u64) -> Result<EmbeddingBank> {
    if dim == 0 {
        return Err(Error::InvalidParam("embedding dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = EmbeddingBank::random(vocab, dim, &mut rng);
    for (t, v) in pretrained {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if *t as usize >= vocab {
            return Err(Error::FeatureOutOfRange(*t));
        }
        e.token_mut(*t as usize).copy_from_slice(v);
    }
    Ok(e)
}

/// Full meta-label targets: every cluster, `+1` iff it is a meta positive.
pub struct MetaTargets<'a> {
    pub meta: &'a MetaLabelMap,
}

impl Targets for MetaTargets<'_> {
    fn fill(&self, point: usize, out: &mut Vec<(LabelId, f64)>) -> Result<usize> {
        out.clear();
        let pos = &self.meta.meta[point];
        out.extend((0..self.meta.num_clusters as LabelId).map(|k| {
            let y = if pos.binary_search(&k).is_ok() { 1.0 } else { -1.0 };
            (k, y)
        }));
        Ok(self.meta.num_clusters - pos.len())
    }
}

/// Fraction of points (with at least one meta positive) whose top-scoring
/// meta-label is positive.
pub fn meta_precision_at_1(net: &Network, d: &Dataset, meta: &MetaLabelMap, points: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    let mut n = 0usize;
    for &i in points {
        if meta.meta[i].is_empty() {
            continue;
        }
        let (_, xhat) = net.features(d.feature(i))?;
        let mut best = (f64::NEG_INFINITY, 0u32);
        for k in 0..meta.num_clusters as u32 {
            let s = math::dot(net.classifiers.column(k as usize), &xhat);
            if s > best.0 {
                best = (s, k);
            }
        }
        n += 1;
        hits += usize::from(meta.meta[i].binary_search(&best.1).is_ok());
    }
    Ok(if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

struct HeldoutHooks<'a, H: ?Sized> {
    d: &'a Dataset,
    meta: &'a MetaLabelMap,
    heldout: &'a [usize],
    inner: &'a mut H,
}

impl<H: TrainHooks + ?Sized> TrainHooks for HeldoutHooks<'_, H> {
    fn evaluate(&mut self, model: &Network) -> Option<f64> {
        if self.heldout.is_empty() {
            return None;
        }
        meta_precision_at_1(model, self.d, self.meta, self.heldout).ok()
    }

    fn on_epoch(&mut self, log: &train::EpochLog) {
        self.inner.on_epoch(log);
    }
}

/// Minimises the full meta-label logistic loss over `E`, `R⁰` and `Ŵ`, with
/// `σ(R⁰) ≤ λ` after every step. `R⁰` starts at zero (identity feature map).
pub fn train_surrogate<H: TrainHooks + ?Sized>(
    d: &Dataset,
    meta: &MetaLabelMap,
    cfg: &SurrogateConfig,
    init: Option<EmbeddingBank>,
    hooks: &mut H,
) -> Result<SurrogateOutcome> {
    cfg.validate()?;
    if meta.meta.len() != d.num_points() {
        return Err(Error::ShapeMismatch("meta labels vs dataset".into()));
    }
    let embeddings = match init {
        Some(e) => {
            if e.dim() != cfg.dim || e.vocab() != d.num_features() {
                return Err(Error::DimMismatch {
                    expected: cfg.dim,
                    got: e.dim(),
                });
            }
            e
        }
        None => init_embeddings(d.num_features(), cfg.dim, &[], cfg.seed)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x000d_e1d0_u64);
    let mut order: Vec<usize> = (0..d.num_points()).collect();
    order.shuffle(&mut rng);
    let n_heldout = (d.num_points() as f64 * cfg.heldout_fraction) as usize;
    let mut heldout = order[..n_heldout].to_vec();
    let mut points = order[n_heldout..].to_vec();
    heldout.sort_unstable();
    points.sort_unstable();

    let mut net = Network {
        embeddings,
        residual: ResidualBlock::zeros(cfg.dim, cfg.lambda, cfg.seed),
        classifiers: ClassifierBank::xavier(meta.num_clusters, cfg.dim, &mut rng),
    };
    let mut wrapped = HeldoutHooks {
        d,
        meta,
        heldout: &heldout,
        inner: hooks,
    };
    let log = train::train(&mut net, d, &points, &MetaTargets { meta }, &cfg.train_params(), &mut wrapped)?;
    Ok(SurrogateOutcome {
        model: IntermediateModel {
            embeddings: net.embeddings.clone(),
        },
        log,
        heldout,
        transient: net,
    })
}
