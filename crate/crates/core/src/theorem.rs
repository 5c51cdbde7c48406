//! Numerical checks of the feature-drift and cosine-similarity bounds that
//! hold whenever `σ_max(R) ≤ λ` and all intermediate features are
//! non-negative:
//!
//! * `‖x̂ − v‖ ≤ λ‖v‖` and `‖x̂‖ ≤ (1+λ)‖v‖`
//! * `‖μ̂ − μ̂⁰‖ ≤ λ√|P|·‖μ̂⁰‖` and `‖μ̂‖ ≤ (1+λ√|P|)‖μ̂⁰‖` (unnormalised means)
//! * `C(v, μ⁰)/(1+ε) ≤ C(x̂, μ) ≤ C(v, μ⁰) + ε`, `ε = (1+λ√|P|)² − 1`

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dense::{self, Matrix};
use crate::error::{Error, Result};
use crate::extreme::{self, ExtremeConfig};
use crate::hnsw::HnswParams;
use crate::math::{self, cosine, norm, sqrt};
use crate::nn::{self, EmbeddingBank};
use crate::shortlist::{self, CorpusEmbedding, Shortlist, ShortlistParams, Shortlister};
use crate::spectral::ResidualBlock;
use crate::train::NoHooks;

pub const SLACK: f64 = 1e-9;

pub fn epsilon(lambda: f64, positives: usize) -> f64 {
    let a = 1.0 + lambda * sqrt(positives as f64);
    a * a - 1.0
}

/// `x̂ = v + ReLU(R v)`
pub fn final_feature(r: &Matrix, v: &[f64]) -> Vec<f64> {
    let rv = r.mul_vec(v);
    v.iter().zip(rv).map(|(a, b)| a + math::relu(b)).collect()
}

/// Exact `σ_max(R)`; errors if it exceeds the block's budget by more than
/// 0.1%. Returns the λ the bounds are evaluated with, `max(λ, σ)`.
pub fn certify(block: &ResidualBlock) -> Result<f64> {
    let sigma = dense::spectral_norm_exact(&block.r);
    if sigma > block.lambda * 1.001 + SLACK {
        return Err(Error::BoundViolated(format!(
            "sigma_max(R) = {sigma} exceeds lambda = {}",
            block.lambda
        )));
    }
    Ok(block.lambda.max(sigma))
}

fn require_nonnegative(v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParam("intermediate features must be finite and >= 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub lambda: f64,
    pub norm_v: f64,
    /// `‖x̂ − v‖`
    pub drift: f64,
    /// `‖x̂ − v‖ / ‖v‖` (0 for `v = 0`)
    pub ratio: f64,
    /// `λ‖v‖ − ‖x̂ − v‖`
    pub margin: f64,
    /// `(1+λ)‖v‖ − ‖x̂‖`
    pub norm_margin: f64,
}

pub fn feature_row(r: &Matrix, lambda: f64, v: &[f64]) -> FeatureRow {
    let xhat = final_feature(r, v);
    let diff: Vec<f64> = xhat.iter().zip(v).map(|(a, b)| a - b).collect();
    let norm_v = norm(v);
    let drift = norm(&diff);
    FeatureRow {
        lambda,
        norm_v,
        drift,
        ratio: if norm_v > 0.0 { drift / norm_v } else { 0.0 },
        margin: lambda * norm_v - drift,
        norm_margin: (1.0 + lambda) * norm_v - norm(&xhat),
    }
}

/// `‖x̂ − v‖ ≤ λ‖v‖` and `‖x̂‖ ≤ (1+λ)‖v‖` for every vector.
pub fn check_feature_bound(block: &ResidualBlock, vs: &[Vec<f64>]) -> Result<Vec<FeatureRow>> {
    let lambda = certify(block)?;
    vs.iter()
        .map(|v| {
            require_nonnegative(v)?;
            let row = feature_row(&block.r, lambda, v);
            if row.margin < -SLACK || row.norm_margin < -SLACK {
                return Err(Error::BoundViolated(format!("feature bound: {row:?}")));
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateRow {
    pub lambda: f64,
    pub num_positives: usize,
    pub norm_mu0: f64,
    /// `‖μ̂ − μ̂⁰‖`
    pub mean_drift: f64,
    /// `λ√|P|·‖μ̂⁰‖ − ‖μ̂ − μ̂⁰‖`
    pub drift_margin: f64,
    /// `(1+λ√|P|)‖μ̂⁰‖ − ‖μ̂‖`
    pub norm_margin: f64,
}

fn mean(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for r in rows {
        math::axpy(1.0, r, &mut m);
    }
    let n = rows.len().max(1) as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

/// Unnormalised means `(μ̂⁰, μ̂)` of a label's positives.
pub fn label_means(r: &Matrix, positives: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = r.rows();
    let finals: Vec<Vec<f64>> = positives.iter().map(|v| final_feature(r, v)).collect();
    (mean(positives, dim), mean(&finals, dim))
}

pub fn check_intermediate_bounds(block: &ResidualBlock, positives: &[Vec<f64>]) -> Result<IntermediateRow> {
    let lambda = certify(block)?;
    for v in positives {
        require_nonnegative(v)?;
    }
    let (mu0, mu) = label_means(&block.r, positives);
    let diff: Vec<f64> = mu.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let p = positives.len();
    let norm_mu0 = norm(&mu0);
    let mean_drift = norm(&diff);
    let s = lambda * sqrt(p as f64);
    let row = IntermediateRow {
        lambda,
        num_positives: p,
        norm_mu0,
        mean_drift,
        drift_margin: s * norm_mu0 - mean_drift,
        norm_margin: (1.0 + s) * norm_mu0 - norm(&mu),
    };
    if row.drift_margin < -SLACK || row.norm_margin < -SLACK {
        return Err(Error::BoundViolated(format!("intermediate bound: {row:?}")));
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub lambda: f64,
    pub num_positives: usize,
    pub epsilon: f64,
    pub feature_ratio: f64,
    /// `C(v, μ⁰)`
    pub cos_intermediate: f64,
    /// `C(x̂, μ)`
    pub cos_final: f64,
    /// `C(x̂, μ) − C(v, μ⁰)/(1+ε)`
    pub lower_margin: f64,
    /// `C(v, μ⁰) + ε − C(x̂, μ)`
    pub upper_margin: f64,
}

/// Two-sided cosine bound between each query and the label whose positives
/// are given. Zero vectors are skipped.
pub fn check_cosine_bounds(block: &ResidualBlock, positives: &[Vec<f64>], queries: &[Vec<f64>]) -> Result<Vec<BoundRow>> {
    let lambda = certify(block)?;
    for v in positives.iter().chain(queries) {
        require_nonnegative(v)?;
    }
    let (mu0, mu) = label_means(&block.r, positives);
    let p = positives.len();
    let eps = epsilon(lambda, p);
    let mut rows = Vec::with_capacity(queries.len());
    if norm(&mu0) == 0.0 {
        return Ok(rows);
    }
    for v in queries {
        let norm_v = norm(v);
        if norm_v == 0.0 {
            continue;
        }
        let xhat = final_feature(&block.r, v);
        let c0 = cosine(v, &mu0);
        let c1 = cosine(&xhat, &mu);
        let row = BoundRow {
            lambda,
            num_positives: p,
            epsilon: eps,
            feature_ratio: feature_row(&block.r, lambda, v).ratio,
            cos_intermediate: c0,
            cos_final: c1,
            lower_margin: c1 - c0 / (1.0 + eps),
            upper_margin: c0 + eps - c1,
        };
        if row.lower_margin < -SLACK || row.upper_margin < -SLACK {
            return Err(Error::BoundViolated(format!("cosine bound: {row:?}")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Rank-one `R = λ v̂ v̂ᵀ`: `σ(R) = λ` and `‖x̂ − v‖ = λ‖v‖` exactly.
pub fn equality_witness(v: &[f64], lambda: f64) -> Matrix {
    let mut u = v.to_vec();
    math::normalize(&mut u);
    let mut r = Matrix::zeros(v.len(), v.len());
    r.add_outer(lambda, &u, &u);
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub features: Vec<FeatureRow>,
    pub intermediate: Vec<IntermediateRow>,
    pub cosines: Vec<BoundRow>,
}

/// All checks on a trained model: intermediate features from `e`, residual
/// from `block`, every label in `labels` against every point in `points`.
pub fn check_model(
    d: &Dataset,
    e: &EmbeddingBank,
    block: &ResidualBlock,
    labels: &[crate::LabelId],
    points: &[usize],
) -> Result<TheoremReport> {
    let vs = d
        .features()
        .iter()
        .map(|x| nn::embed_bag(x, e))
        .collect::<Result<Vec<_>>>()?;
    let label_points = d.label_points();
    let queries: Vec<Vec<f64>> = points.iter().map(|&i| vs[i].clone()).collect();
    let mut report = TheoremReport {
        features: check_feature_bound(block, &queries)?,
        ..TheoremReport::default()
    };
    for &l in labels {
        let pos: Vec<Vec<f64>> = label_points
            .get(l as usize)
            .ok_or(Error::UncoveredLabel(l))?
            .iter()
            .map(|&i| vs[i as usize].clone())
            .collect();
        if pos.is_empty() {
            continue;
        }
        report.intermediate.push(check_intermediate_bounds(block, &pos)?);
        report.cosines.extend(check_cosine_bounds(block, &pos, &queries)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FalsificationReport {
    pub instances: usize,
    pub feature_violations: usize,
    pub intermediate_violations: usize,
    pub cosine_violations: usize,
    /// Largest observed `‖x̂ − v‖ / (λ‖v‖)`.
    pub max_feature_tightness: f64,
    pub min_lower_margin: f64,
    pub min_upper_margin: f64,
}

impl FalsificationReport {
    pub fn violations(&self) -> usize {
        self.feature_violations + self.intermediate_violations + self.cosine_violations
    }
}

fn random_nonneg<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() * 2.0 })
        .collect()
}

/// A random `R` with `σ_max(R) = λ` exactly (up to rounding), a random mix of
/// dense Gaussian-like matrices and rank-one witnesses.
pub fn random_residual<R: Rng>(rng: &mut R, dim: usize, lambda: f64) -> Matrix {
    if rng.gen_bool(0.2) {
        let v = random_nonneg(rng, dim);
        if norm(&v) > 0.0 {
            return equality_witness(&v, lambda);
        }
    }
    let data: Vec<f64> = (0..dim * dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let mut r = Matrix::from_vec(dim, dim, data);
    let sigma = dense::spectral_norm_exact(&r);
    if sigma > 0.0 {
        r.scale(lambda / sigma);
    }
    r
}

/// Randomised search for counterexamples: `instances` draws of `(R, v, P)`
/// with `D ∈ [2, max_dim]`, `|P| ∈ [1, max_positives]` and `λ` cycling
/// through `lambdas`. Violations are counted rather than raised.
pub fn falsify(instances: usize, lambdas: &[f64], max_dim: usize, max_positives: usize, seed: u64) -> FalsificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = FalsificationReport {
        min_lower_margin: f64::INFINITY,
        min_upper_margin: f64::INFINITY,
        ..FalsificationReport::default()
    };
    for n in 0..instances {
        let lambda = lambdas[n % lambdas.len()];
        let dim = rng.gen_range(2..=max_dim.max(2));
        let r = random_residual(&mut rng, dim, lambda);
        let block = ResidualBlock {
            r,
            lambda,
            u: vec![0.0; dim],
            v: vec![0.0; dim],
        };
        let p = rng.gen_range(1..=max_positives.max(1));
        let positives: Vec<Vec<f64>> = (0..p).map(|_| random_nonneg(&mut rng, dim)).collect();
        let query = random_nonneg(&mut rng, dim);
        rep.instances += 1;

        let fr = feature_row(&block.r, lambda, &query);
        if fr.norm_v > 0.0 {
            rep.max_feature_tightness = rep.max_feature_tightness.max(fr.drift / (lambda * fr.norm_v));
        }
        if fr.margin < -SLACK || fr.norm_margin < -SLACK {
            rep.feature_violations += 1;
        }
        if let Err(Error::BoundViolated(_)) = check_intermediate_bounds(&block, &positives) {
            rep.intermediate_violations += 1;
        }
        match check_cosine_bounds(&block, &positives, core::slice::from_ref(&query)) {
            Ok(rows) => {
                for row in rows {
                    rep.min_lower_margin = rep.min_lower_margin.min(row.lower_margin);
                    rep.min_upper_margin = rep.min_upper_margin.min(row.upper_margin);
                }
            }
            Err(_) => rep.cosine_violations += 1,
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapParams {
    pub extreme: ExtremeConfig,
    pub hnsw: HnswParams,
    pub shortlist: ShortlistParams,
    pub head_count: usize,
    pub centers_per_head: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPoint {
    pub lambda: f64,
    /// Exact `σ_max(R)` after training.
    pub sigma: f64,
    /// Mean Jaccard overlap of `v`- and `x̂`-based shortlists.
    pub overlap: f64,
}

fn query_shortlists(d: &Dataset, corpus: &CorpusEmbedding, p: &OverlapParams) -> Result<Shortlist> {
    let reps = shortlist::label_representatives(d, corpus, p.head_count, p.centers_per_head, p.hnsw.seed);
    let s = Shortlister::build(d, corpus, &reps, p.hnsw, p.shortlist)?;
    Ok(s.query_shortlists(corpus))
}

/// For each `λ`, trains a residual on `train_shortlist` with `E` frozen, then
/// compares prediction-mode shortlists built from `v` and from `x̂`. `λ = 0`
/// uses `R = 0` without training.
pub fn shortlist_overlap_vs_lambda(
    d: &Dataset,
    e: &EmbeddingBank,
    train_shortlist: &Shortlist,
    lambdas: &[f64],
    p: &OverlapParams,
) -> Result<Vec<OverlapPoint>> {
    let base_corpus = shortlist::embed_corpus(d, e)?;
    let base = query_shortlists(d, &base_corpus, p)?;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let block = if lambda == 0.0 {
            ResidualBlock::zeros(e.dim(), 1.0, 0)
        } else {
            let cfg = ExtremeConfig {
                lambda,
                fine_tune_embeddings: false,
                freeze_residual: false,
                ..p.extreme
            };
            extreme::train_extreme(d, e.clone(), train_shortlist, &cfg, &mut NoHooks)?.model.residual
        };
        let final_corpus = shortlist::embed_corpus_final(d, e, &block)?;
        let other = query_shortlists(d, &final_corpus, p)?;
        out.push(OverlapPoint {
            lambda,
            sigma: dense::spectral_norm_exact(&block.r),
            overlap: shortlist::shortlist_overlap(&base, &other)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(r: Matrix, lambda: f64) -> ResidualBlock {
        let n = r.rows();
        ResidualBlock {
            r,
            lambda,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    #[test]
    fn zero_residual_has_no_drift() {
        let b = block(Matrix::zeros(3, 3), 0.5);
        let rows = check_feature_bound(&b, &[vec![1.0, 2.0, 0.0], vec![0.0; 3]]).unwrap();
        assert_eq!(rows[0].drift, 0.0);
        assert_eq!(rows[0].margin, 0.5 * norm(&[1.0, 2.0, 0.0]));
        assert_eq!(rows[1].margin, 0.0);
    }

    #[test]
    fn witness_is_tight() {
        let v = vec![0.3, 1.2, 0.0, 2.5];
        let r = equality_witness(&v, 0.7);
        assert!((dense::spectral_norm_exact(&r) - 0.7).abs() < 1e-12);
        let row = feature_row(&r, 0.7, &v);
        assert!(row.margin.abs() < 1e-12);
    }

    #[test]
    fn epsilon_values() {
        assert_eq!(epsilon(0.0, 9), 0.0);
        assert!((epsilon(0.1, 1) - 0.21).abs() < 1e-15);
    }

    #[test]
    fn negative_features_rejected() {
        let b = block(Matrix::zeros(2, 2), 0.5);
        assert!(check_feature_bound(&b, &[vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn over_budget_residual_rejected() {
        let b = block(Matrix::identity(2), 0.5);
        assert!(matches!(certify(&b), Err(Error::BoundViolated(_))));
    }
}
