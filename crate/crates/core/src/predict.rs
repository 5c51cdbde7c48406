//! Inference: shortlist from the intermediate features, score the shortlist
//! with the classifiers, fuse with the route similarity and (optionally) the
//! re-ranker.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hnsw::Scratch;
use crate::math::{self, sigmoid};
use crate::nn::{self, EmbeddingBank};
use crate::reranker::RerankerModel;
use crate::shortlist::{self, Entry, ShortlistParams, Shortlister};
use crate::train::{EpochLog, Network, TrainHooks};
use crate::{LabelId, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub alpha: f64,
    pub beta: f64,
    pub top_k: usize,
    /// Overrides the shortlister's search beam when set.
    pub ef_search: Option<usize>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.7,
            top_k: 5,
            ef_search: None,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParam("alpha and beta must lie in [0, 1]".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidParam("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything needed at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceModel {
    /// Embeddings the indices were built from.
    pub shortlist_embeddings: EmbeddingBank,
    pub base: Network,
    pub reranker: Option<RerankerModel>,
    pub shortlister: Shortlister,
}

impl InferenceModel {
    pub fn num_labels(&self) -> usize {
        self.base.classifiers.num_labels()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub num_labels: usize,
    /// `(label, score)`, score descending then id ascending.
    pub labels: Vec<(LabelId, f64)>,
    pub shortlist_len: usize,
    pub empty_document: bool,
}

/// `ŷ = α σ(wᵀx̂) + (1−α) σ(s)`
pub fn fuse_base(alpha: f64, classifier_score: f64, similarity: f64) -> f64 {
    alpha * sigmoid(classifier_score) + (1.0 - alpha) * sigmoid(similarity)
}

/// `ȳ = β ŷ + (1−β) ỹ`; without a re-ranker `ȳ = ŷ`.
pub fn fuse_rerank(beta: f64, base: f64, rerank: Option<f64>) -> f64 {
    match rerank {
        Some(r) => beta * base + (1.0 - beta) * r,
        None => base,
    }
}

/// Sorts by score descending, ties to the lower id, and keeps `k`.
pub fn top_k(mut scores: Vec<(LabelId, f64)>, k: usize) -> Vec<(LabelId, f64)> {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores.truncate(k);
    scores
}

/// Unit query vector `v/‖v‖` (zero stays zero).
pub fn query_vector(x: &SparseVector, e: &EmbeddingBank) -> Result<Vec<f64>> {
    let mut v = nn::embed_bag(x, e)?;
    math::normalize(&mut v);
    Ok(v)
}

/// Fused base scores `ŷ_l` over a shortlist.
pub fn base_scores(net: &Network, xhat: &[f64], entries: &[Entry], alpha: f64) -> Vec<(LabelId, f64)> {
    entries
        .iter()
        .map(|e| (e.label, fuse_base(alpha, net.classifiers.score(e.label, xhat), e.score)))
        .collect()
}

/// Full fusion over a given shortlist; returns every shortlisted label.
pub fn score_entries(model: &InferenceModel, x: &SparseVector, entries: &[Entry], cfg: &PredictConfig) -> Result<Vec<(LabelId, f64)>> {
    let (_, xhat) = model.base.features(x)?;
    let mut scores = base_scores(&model.base, &xhat, entries, cfg.alpha);
    if let Some(rr) = &model.reranker {
        let (_, xt) = rr.net.features(x)?;
        for s in &mut scores {
            let r = rr.score(s.0, &xt);
            s.1 = fuse_rerank(cfg.beta, s.1, Some(r));
        }
    }
    Ok(scores)
}

fn shortlist_params(model: &InferenceModel, cfg: &PredictConfig) -> ShortlistParams {
    let mut p = model.shortlister.params;
    if let Some(ef) = cfg.ef_search {
        p.ef_search = ef;
    }
    p
}

pub fn predict(x: &SparseVector, model: &InferenceModel, cfg: &PredictConfig, scratch: &mut Scratch) -> Result<Prediction> {
    cfg.validate()?;
    let num_labels = model.num_labels();
    if x.is_empty() {
        return Ok(Prediction {
            num_labels,
            empty_document: true,
            ..Prediction::default()
        });
    }
    let q = query_vector(x, &model.shortlist_embeddings)?;
    let params = shortlist_params(model, cfg);
    let mut rng = shortlist::point_rng(0, 0);
    let entries = model.shortlister.shortlist_point_with(&params, &q, None, None, &mut rng, scratch);
    let scores = score_entries(model, x, &entries, cfg)?;
    Ok(Prediction {
        num_labels,
        labels: top_k(scores, cfg.top_k),
        shortlist_len: entries.len(),
        empty_document: false,
    })
}

/// Sequential batch prediction.
pub fn predict_all(xs: &[SparseVector], model: &InferenceModel, cfg: &PredictConfig) -> Result<Vec<Prediction>> {
    let mut scratch = Scratch::default();
    xs.iter().map(|x| predict(x, model, cfg, &mut scratch)).collect()
}

/// Weighted mean of member scores per label (missing = 0), re-ranked.
pub fn ensemble_average(members: &[&Prediction], weights: &[f64], k: usize) -> Result<Prediction> {
    let Some(first) = members.first() else {
        return Err(Error::InvalidParam("ensemble needs at least one member".into()));
    };
    if weights.len() != members.len() {
        return Err(Error::ShapeMismatch("one weight per ensemble member".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidParam("ensemble weights must be >= 0 with a positive sum".into()));
    }
    let mut acc: BTreeMap<LabelId, f64> = BTreeMap::new();
    for (m, w) in members.iter().zip(weights) {
        if m.num_labels != first.num_labels {
            return Err(Error::LabelSpaceMismatch(first.num_labels, m.num_labels));
        }
        for &(l, s) in &m.labels {
            *acc.entry(l).or_insert(0.0) += w * s;
        }
    }
    let scores = acc.into_iter().map(|(l, s)| (l, s / total)).collect();
    Ok(Prediction {
        num_labels: first.num_labels,
        labels: top_k(scores, k),
        shortlist_len: members.iter().map(|m| m.shortlist_len).max().unwrap_or(0),
        empty_document: members.iter().all(|m| m.empty_document),
    })
}

/// Held-out P@1 of a base network over fixed prediction-mode shortlists.
pub struct ShortlistP1Hook<'a, H: ?Sized = crate::train::NoHooks> {
    pub data: &'a Dataset,
    pub shortlists: &'a [Vec<Entry>],
    pub alpha: f64,
    pub inner: Option<&'a mut H>,
}

impl<H: TrainHooks + ?Sized> TrainHooks for ShortlistP1Hook<'_, H> {
    fn evaluate(&mut self, model: &Network) -> Option<f64> {
        if self.data.num_points() == 0 {
            return None;
        }
        let mut hits = 0usize;
        let mut n = 0usize;
        for i in 0..self.data.num_points() {
            let truth = self.data.point_labels(i);
            if truth.is_empty() {
                continue;
            }
            n += 1;
            let Ok((_, xhat)) = model.features(self.data.feature(i)) else {
                return None;
            };
            let scores = base_scores(model, &xhat, &self.shortlists[i], self.alpha);
            if let Some(&(l, _)) = top_k(scores, 1).first() {
                hits += usize::from(truth.binary_search(&l).is_ok());
            }
        }
        (n > 0).then(|| hits as f64 / n as f64)
    }

    fn on_epoch(&mut self, log: &EpochLog) {
        if let Some(h) = self.inner.as_deref_mut() {
            h.on_epoch(log);
        }
    }
}
