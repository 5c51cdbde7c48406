//! Ranking metrics: P@k, nDCG@k, propensity-scored variants, recall@k and
//! label-frequency quantile breakdowns.
//!
//! `ndcg_at_k` and `psndcg_at_k` follow the printed definitions literally,
//! including the `1/k` inside DCG and the `1/(ln l + 1)` normaliser of the
//! propensity-scored form. The `*_normalized` variants divide by the score of
//! the ideal ranking and are what reports usually call N@k and PSN@k.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{exp, ln, powf};
use crate::LabelId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub num_points: usize,
    pub p: Vec<f64>,
}

impl PropensityModel {
    /// `p_l = 1 / (1 + C e^{−A ln(N_l + B)})`, `C = (ln N − 1)(B + 1)^A`.
    /// `C` is clamped at 0 when `N < e`.
    pub fn from_frequencies(freq: &[usize], num_points: usize, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParam("propensity A and B must be > 0".into()));
        }
        if num_points == 0 {
            return Err(Error::InvalidParam("propensities need at least one point".into()));
        }
        let c = ((ln(num_points as f64) - 1.0) * powf(b + 1.0, a)).max(0.0);
        let p = freq.iter().map(|&n| 1.0 / (1.0 + c * exp(-a * ln(n as f64 + b)))).collect();
        Ok(Self {
            a,
            b,
            c,
            num_points,
            p,
        })
    }

    pub fn uniform(num_labels: usize) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            num_points: 0,
            p: vec![1.0; num_labels],
        }
    }

    pub fn get(&self, l: LabelId) -> Result<f64> {
        self.p.get(l as usize).copied().ok_or(Error::MissingPropensity(l))
    }
}

pub fn propensities(train: &Dataset, a: f64, b: f64) -> Result<PropensityModel> {
    PropensityModel::from_frequencies(&train.label_frequencies(), train.num_points(), a, b)
}

/// The `k` best labels of `pred`: score descending, ties to the lower id.
pub fn rank_k(pred: &[(LabelId, f64)], k: usize) -> Vec<LabelId> {
    let mut v = pred.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|e| e.0).collect()
}

fn hit(truth: &[LabelId], l: LabelId) -> bool {
    truth.contains(&l)
}

fn gain(pos: usize) -> f64 {
    1.0 / ln(pos as f64 + 1.0)
}

pub fn precision_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], k: usize) -> f64 {
    rank_k(pred, k).into_iter().filter(|&l| hit(truth, l)).count() as f64 / k as f64
}

pub fn recall_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    rank_k(pred, k).into_iter().filter(|&l| hit(truth, l)).count() as f64 / truth.len() as f64
}

/// `(1/k) Σ_{pos} y / ln(pos + 1)` over the top `k`.
pub fn dcg_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], k: usize) -> f64 {
    let s: f64 = rank_k(pred, k)
        .into_iter()
        .enumerate()
        .filter(|&(_, l)| hit(truth, l))
        .map(|(r, _)| gain(r + 1))
        .sum();
    s / k as f64
}

/// `DCG@k / Σ_{l=1}^{min(k, ‖y‖₀)} 1/ln(l+1)`
pub fn ndcg_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], k: usize) -> f64 {
    let m = k.min(truth.len());
    if m == 0 {
        return 0.0;
    }
    let norm: f64 = (1..=m).map(gain).sum();
    dcg_at_k(pred, truth, k) / norm
}

/// DCG against the ideal DCG, both without the `1/k` factor.
pub fn ndcg_at_k_normalized(pred: &[(LabelId, f64)], truth: &[LabelId], k: usize) -> f64 {
    ndcg_at_k(pred, truth, k) * k as f64
}

/// `(1/k) Σ y_l / p_l`
pub fn psp_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], prop: &PropensityModel, k: usize) -> Result<f64> {
    let mut s = 0.0;
    for l in rank_k(pred, k) {
        let p = prop.get(l)?;
        if hit(truth, l) {
            s += 1.0 / p;
        }
    }
    Ok(s / k as f64)
}

fn inverse_propensities_desc(truth: &[LabelId], prop: &PropensityModel) -> Result<Vec<f64>> {
    let mut w = truth.iter().map(|&l| prop.get(l).map(|p| 1.0 / p)).collect::<Result<Vec<_>>>()?;
    w.sort_by(|a, b| b.total_cmp(a));
    Ok(w)
}

/// Raw PSP@k over the best PSP@k any ranking could reach.
pub fn psp_at_k_normalized(pred: &[(LabelId, f64)], truth: &[LabelId], prop: &PropensityModel, k: usize) -> Result<f64> {
    let ideal: f64 = inverse_propensities_desc(truth, prop)?.into_iter().take(k).sum();
    if ideal == 0.0 {
        return Ok(0.0);
    }
    Ok(psp_at_k(pred, truth, prop, k)? * k as f64 / ideal)
}

/// `(1/k) Σ_{pos} y_l / (p_l ln(pos + 1))`
pub fn psdcg_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], prop: &PropensityModel, k: usize) -> Result<f64> {
    let mut s = 0.0;
    for (r, l) in rank_k(pred, k).into_iter().enumerate() {
        let p = prop.get(l)?;
        if hit(truth, l) {
            s += gain(r + 1) / p;
        }
    }
    Ok(s / k as f64)
}

/// `PSDCG@k / Σ_{l=1}^{k} 1/(ln l + 1)`
pub fn psndcg_at_k(pred: &[(LabelId, f64)], truth: &[LabelId], prop: &PropensityModel, k: usize) -> Result<f64> {
    let norm: f64 = (1..=k).map(|l| 1.0 / (ln(l as f64) + 1.0)).sum();
    Ok(psdcg_at_k(pred, truth, prop, k)? / norm)
}

/// PSDCG@k over the PSDCG@k of the ideal ranking (true labels by `1/p`).
pub fn psndcg_at_k_normalized(pred: &[(LabelId, f64)], truth: &[LabelId], prop: &PropensityModel, k: usize) -> Result<f64> {
    let ideal: f64 = inverse_propensities_desc(truth, prop)?
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(r, w)| w * gain(r + 1))
        .sum();
    if ideal == 0.0 {
        return Ok(0.0);
    }
    Ok(psdcg_at_k(pred, truth, prop, k)? * k as f64 / ideal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub precision: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub ndcg_normalized: Vec<f64>,
    pub psp: Vec<f64>,
    pub psp_normalized: Vec<f64>,
    pub psndcg: Vec<f64>,
    pub psndcg_normalized: Vec<f64>,
    pub recall: Vec<f64>,
    /// Points with at least one true label.
    pub evaluated_points: usize,
    /// Points without true labels, left out of every mean.
    pub skipped_points: usize,
}

impl MetricReport {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.precision[i])
    }
}

/// Means over points with at least one true label.
pub fn evaluate(
    preds: &[Vec<(LabelId, f64)>],
    truth: &[Vec<LabelId>],
    prop: &PropensityModel,
    ks: &[usize],
) -> Result<MetricReport> {
    if preds.len() != truth.len() {
        return Err(Error::ShapeMismatch("one prediction row per truth row".into()));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    let n = ks.len();
    let mut r = MetricReport {
        ks: ks.to_vec(),
        precision: vec![0.0; n],
        ndcg: vec![0.0; n],
        ndcg_normalized: vec![0.0; n],
        psp: vec![0.0; n],
        psp_normalized: vec![0.0; n],
        psndcg: vec![0.0; n],
        psndcg_normalized: vec![0.0; n],
        recall: vec![0.0; n],
        evaluated_points: 0,
        skipped_points: 0,
    };
    for (p, t) in preds.iter().zip(truth) {
        if t.is_empty() {
            r.skipped_points += 1;
            continue;
        }
        r.evaluated_points += 1;
        for (j, &k) in ks.iter().enumerate() {
            r.precision[j] += precision_at_k(p, t, k);
            r.ndcg[j] += ndcg_at_k(p, t, k);
            r.ndcg_normalized[j] += ndcg_at_k_normalized(p, t, k);
            r.psp[j] += psp_at_k(p, t, prop, k)?;
            r.psp_normalized[j] += psp_at_k_normalized(p, t, prop, k)?;
            r.psndcg[j] += psndcg_at_k(p, t, prop, k)?;
            r.psndcg_normalized[j] += psndcg_at_k_normalized(p, t, prop, k)?;
            r.recall[j] += recall_at_k(p, t, k);
        }
    }
    if r.evaluated_points > 0 {
        let m = r.evaluated_points as f64;
        for v in [
            &mut r.precision,
            &mut r.ndcg,
            &mut r.ndcg_normalized,
            &mut r.psp,
            &mut r.psp_normalized,
            &mut r.psndcg,
            &mut r.psndcg_normalized,
            &mut r.recall,
        ] {
            v.iter_mut().for_each(|x| *x /= m);
        }
    }
    Ok(r)
}

/// P@k split by label-frequency bin. Labels are ordered by training
/// frequency (descending, ties to the lower id) and cut into `bins` nearly
/// equal groups; bin 0 holds the head. The bins sum to P@k.
pub fn quantile_breakdown(
    preds: &[Vec<(LabelId, f64)>],
    truth: &[Vec<LabelId>],
    train_freq: &[usize],
    bins: usize,
    k: usize,
) -> Result<Vec<f64>> {
    if bins == 0 || k == 0 {
        return Err(Error::InvalidParam("bins and k must be >= 1".into()));
    }
    if preds.len() != truth.len() {
        return Err(Error::ShapeMismatch("one prediction row per truth row".into()));
    }
    let num_labels = train_freq.len();
    let mut order: Vec<usize> = (0..num_labels).collect();
    order.sort_by(|&a, &b| train_freq[b].cmp(&train_freq[a]).then(a.cmp(&b)));
    let mut bin_of = vec![0usize; num_labels];
    for (rank, &l) in order.iter().enumerate() {
        bin_of[l] = rank * bins / num_labels;
    }
    let mut out = vec![0.0; bins];
    let mut evaluated = 0usize;
    for (p, t) in preds.iter().zip(truth) {
        if t.is_empty() {
            continue;
        }
        evaluated += 1;
        for l in rank_k(p, k) {
            if hit(t, l) {
                let b = *bin_of.get(l as usize).ok_or(Error::MissingPropensity(l))?;
                out[b] += 1.0 / k as f64;
            }
        }
    }
    if evaluated > 0 {
        out.iter_mut().for_each(|x| *x /= evaluated as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propensity_asymptotes() {
        let m = PropensityModel::from_frequencies(&[0, 5, 1_000_000_000], 10_000, 0.55, 1.5).unwrap();
        assert!(m.p[2] > 0.999);
        assert!(m.p.iter().all(|&p| p > 0.0 && p <= 1.0));
        // N < e clamps C to 0.
        let e = PropensityModel::from_frequencies(&[0, 3], 2, 0.55, 1.5).unwrap();
        assert_eq!(e.p, vec![1.0, 1.0]);
        assert!(PropensityModel::from_frequencies(&[1], 10, 0.0, 1.5).is_err());
    }

    #[test]
    fn precision_examples() {
        let pred = vec![(1, 0.9), (2, 0.8), (3, 0.7), (4, 0.6), (5, 0.5)];
        assert_eq!(precision_at_k(&pred, &[1, 3], 3), 2.0 / 3.0);
        assert_eq!(precision_at_k(&pred, &[1, 2, 3], 3), 1.0);
        assert_eq!(precision_at_k(&pred, &[9], 3), 0.0);
        assert_eq!(ndcg_at_k(&pred, &[1], 1), 1.0);
        assert_eq!(ndcg_at_k(&pred, &[], 3), 0.0);
    }

    #[test]
    fn psp_hand_case() {
        let prop = PropensityModel {
            p: vec![0.5, 1.0, 1.0],
            ..PropensityModel::uniform(3)
        };
        let pred = vec![(0, 0.9), (1, 0.5), (2, 0.1)];
        // top-2 = {0, 1}, truth = {0, 2}: raw = (2 + 0)/2, ideal = (2 + 1)/2.
        assert_eq!(psp_at_k(&pred, &[0, 2], &prop, 2).unwrap(), 1.0);
        assert_eq!(psp_at_k_normalized(&pred, &[0, 2], &prop, 2).unwrap(), 2.0 / 3.0);
        assert!(matches!(psp_at_k(&[(7, 1.0)], &[0], &prop, 1), Err(Error::MissingPropensity(7))));
        assert_eq!(psp_at_k(&[], &[0], &prop, 1).unwrap(), 0.0);
    }
}
