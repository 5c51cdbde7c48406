//! Second, independently parameterised model trained on each point's
//! positives plus the base model's top-k mistakes.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::extreme::ExtremeConfig;
use crate::math;
use crate::nn::{ClassifierBank, EmbeddingBank};
use crate::predict::Prediction;
use crate::spectral::ResidualBlock;
use crate::train::{self, Network, Targets, TrainHooks, TrainLog};
use crate::LabelId;

/// `S̃_i = P_i ∪ top-k(ŷ_i)`, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerTrainSet {
    pub num_labels: usize,
    pub rows: Vec<Vec<LabelId>>,
    /// `|S̃_i \ P_i|` per point.
    pub mined: Vec<usize>,
}

impl RerankerTrainSet {
    pub fn mean_mined(&self) -> f64 {
        if self.mined.is_empty() {
            return 0.0;
        }
        self.mined.iter().sum::<usize>() as f64 / self.mined.len() as f64
    }

    /// Labels appearing in any `S̃_i`.
    pub fn coverage(&self) -> Vec<bool> {
        let mut seen = alloc::vec![false; self.num_labels];
        for &l in self.rows.iter().flatten() {
            seen[l as usize] = true;
        }
        seen
    }
}

/// Forms `S̃_i` from the first `k` entries of each base prediction.
pub fn mine_mispredictions(d: &Dataset, predictions: &[Prediction], k: usize) -> Result<RerankerTrainSet> {
    if predictions.len() != d.num_points() {
        return Err(Error::ShapeMismatch("one prediction per training point".into()));
    }
    let mut rows = Vec::with_capacity(d.num_points());
    let mut mined = Vec::with_capacity(d.num_points());
    for (i, p) in predictions.iter().enumerate() {
        if p.num_labels != d.num_labels() {
            return Err(Error::LabelSpaceMismatch(d.num_labels(), p.num_labels));
        }
        let pos = d.point_labels(i);
        let mut row = pos.to_vec();
        row.extend(p.labels.iter().take(k).map(|e| e.0));
        row.sort_unstable();
        row.dedup();
        mined.push(row.len() - pos.len());
        rows.push(row);
    }
    Ok(RerankerTrainSet {
        num_labels: d.num_labels(),
        rows,
        mined,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankerModel {
    pub net: Network,
    /// Labels seen in training; the rest score 0.
    pub trained: Vec<bool>,
}

impl RerankerModel {
    /// `σ(w̃_lᵀx̃)` for trained labels, 0 otherwise.
    pub fn score(&self, l: LabelId, xt: &[f64]) -> f64 {
        if self.trained.get(l as usize).copied().unwrap_or(false) {
            math::sigmoid(self.net.classifiers.score(l, xt))
        } else {
            0.0
        }
    }
}

/// `+1` on `P_i`, `−1` on the mined labels of `S̃_i`.
pub struct SetTargets<'a> {
    pub data: &'a Dataset,
    pub set: &'a RerankerTrainSet,
}

impl Targets for SetTargets<'_> {
    fn fill(&self, point: usize, out: &mut Vec<(LabelId, f64)>) -> Result<usize> {
        out.clear();
        let pos = self.data.point_labels(point);
        let row = self.set.rows.get(point).ok_or(Error::MissingShortlist(point))?;
        out.extend(row.iter().map(|&l| (l, if pos.binary_search(&l).is_ok() { 1.0 } else { -1.0 })));
        Ok(row.len() - pos.len())
    }
}

#[derive(Debug, Clone)]
pub struct RerankerOutcome {
    pub model: RerankerModel,
    pub log: TrainLog,
}

/// Trains `(Ẽ, R̃, W̃)` over `S̃_i`. `Ẽ` starts as a copy of `embeddings` and
/// is always trained.
pub fn train_reranker<H: TrainHooks + ?Sized>(
    d: &Dataset,
    embeddings: &EmbeddingBank,
    ts: &RerankerTrainSet,
    cfg: &ExtremeConfig,
    hooks: &mut H,
) -> Result<RerankerOutcome> {
    cfg.validate()?;
    if ts.rows.len() < d.num_points() {
        return Err(Error::MissingShortlist(ts.rows.len()));
    }
    if ts.num_labels != d.num_labels() {
        return Err(Error::LabelSpaceMismatch(d.num_labels(), ts.num_labels));
    }
    if embeddings.vocab() != d.num_features() {
        return Err(Error::DimMismatch {
            expected: d.num_features(),
            got: embeddings.vocab(),
        });
    }
    let dim = embeddings.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e7a_4c3e);
    let mut net = Network {
        embeddings: embeddings.clone(),
        residual: ResidualBlock::zeros(dim, cfg.lambda, cfg.seed ^ 1),
        classifiers: ClassifierBank::xavier(d.num_labels(), dim, &mut rng),
    };
    let mut params = cfg.train_params();
    params.train_embeddings = true;
    let points: Vec<usize> = (0..d.num_points()).filter(|&i| !ts.rows[i].is_empty()).collect();
    let log = train::train(&mut net, d, &points, &SetTargets { data: d, set: ts }, &params, hooks)?;
    Ok(RerankerOutcome {
        model: RerankerModel {
            net,
            trained: ts.coverage(),
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SparseVector;
    use alloc::vec;

    fn data() -> Dataset {
        let f = vec![
            SparseVector::from_pairs(vec![(0, 1.0)]),
            SparseVector::from_pairs(vec![(1, 1.0)]),
        ];
        Dataset::new(2, 6, f, vec![vec![0, 4], vec![2]]).unwrap()
    }

    fn pred(labels: Vec<(LabelId, f64)>) -> Prediction {
        Prediction {
            num_labels: 6,
            labels,
            shortlist_len: 0,
            empty_document: false,
        }
    }

    #[test]
    fn mining_adds_only_mistakes() {
        let d = data();
        let preds = vec![pred(vec![(4, 0.9), (5, 0.8), (0, 0.7)]), pred(vec![(2, 0.9), (1, 0.1)])];
        let ts = mine_mispredictions(&d, &preds, 3).unwrap();
        assert_eq!(ts.rows, vec![vec![0, 4, 5], vec![1, 2]]);
        assert_eq!(ts.mined, vec![1, 1]);
        let none = mine_mispredictions(&d, &preds, 0).unwrap();
        assert_eq!(none.rows, vec![vec![0, 4], vec![2]]);
        assert_eq!(none.mean_mined(), 0.0);
        assert_eq!(ts.coverage(), vec![true, true, true, false, true, true]);
    }
}
