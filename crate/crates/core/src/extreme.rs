//! Stages three and four: the residual block and the full classifier bank,
//! trained on positives plus shortlisted negatives only.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ClassifierBank, EmbeddingBank};
use crate::shortlist::Shortlist;
use crate::spectral::ResidualBlock;
use crate::train::{self, Network, Targets, TrainHooks, TrainLog, TrainParams};
use crate::LabelId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremeConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub fine_tune_embeddings: bool,
    /// Keep `R` at its initial value (zero).
    pub freeze_residual: bool,
    pub seed: u64,
}

impl Default for ExtremeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            learning_rate: 0.002,
            batch_size: 256,
            epochs: 20,
            dropout: 0.5,
            fine_tune_embeddings: false,
            freeze_residual: false,
            seed: 0,
        }
    }
}

impl ExtremeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParam("lambda must lie in (0, 1]".into()));
        }
        self.train_params().validate()
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            dropout: self.dropout,
            seed: self.seed,
            train_embeddings: self.fine_tune_embeddings,
            train_residual: !self.freeze_residual,
        }
    }
}

/// `Ŝ_i = P_i ∪ N̂_i` with `y = +1` on `P_i` and `−1` on the shortlist.
pub struct ShortlistTargets<'a> {
    pub data: &'a Dataset,
    pub shortlist: &'a Shortlist,
}

impl<'a> ShortlistTargets<'a> {
    pub fn new(data: &'a Dataset, shortlist: &'a Shortlist) -> Result<Self> {
        if shortlist.len() < data.num_points() {
            return Err(Error::MissingShortlist(shortlist.len()));
        }
        if shortlist.num_labels != data.num_labels() {
            return Err(Error::LabelSpaceMismatch(data.num_labels(), shortlist.num_labels));
        }
        Ok(Self { data, shortlist })
    }
}

impl Targets for ShortlistTargets<'_> {
    fn fill(&self, point: usize, out: &mut Vec<(LabelId, f64)>) -> Result<usize> {
        out.clear();
        let pos = self.data.point_labels(point);
        let row = self.shortlist.rows.get(point).ok_or(Error::MissingShortlist(point))?;
        out.extend(pos.iter().map(|&l| (l, 1.0)));
        out.extend(row.iter().filter(|e| pos.binary_search(&e.label).is_err()).map(|e| (e.label, -1.0)));
        Ok(row.len())
    }
}

/// Initial network: the given embeddings, `R = 0`, Xavier classifiers.
pub fn init_extreme(d: &Dataset, embeddings: EmbeddingBank, cfg: &ExtremeConfig) -> Result<Network> {
    cfg.validate()?;
    if embeddings.vocab() != d.num_features() {
        return Err(Error::DimMismatch {
            expected: d.num_features(),
            got: embeddings.vocab(),
        });
    }
    let dim = embeddings.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0e47_2e3e);
    Ok(Network {
        classifiers: ClassifierBank::xavier(d.num_labels(), dim, &mut rng),
        residual: ResidualBlock::zeros(dim, cfg.lambda, cfg.seed),
        embeddings,
    })
}

#[derive(Debug, Clone)]
pub struct ExtremeOutcome {
    pub model: Network,
    pub log: TrainLog,
}

/// Minimises the shortlist-restricted logistic loss with `σ(R) ≤ λ`.
pub fn train_extreme<H: TrainHooks + ?Sized>(
    d: &Dataset,
    embeddings: EmbeddingBank,
    sl: &Shortlist,
    cfg: &ExtremeConfig,
    hooks: &mut H,
) -> Result<ExtremeOutcome> {
    let targets = ShortlistTargets::new(d, sl)?;
    let mut net = init_extreme(d, embeddings, cfg)?;
    let points: Vec<usize> = (0..d.num_points()).collect();
    let log = train::train(&mut net, d, &points, &targets, &cfg.train_params(), hooks)?;
    Ok(ExtremeOutcome { model: net, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shortlist::{Entry, Source};
    use crate::SparseVector;
    use alloc::vec;

    fn tiny() -> Dataset {
        let f = vec![
            SparseVector::from_pairs(vec![(0, 1.0)]),
            SparseVector::from_pairs(vec![(1, 1.0)]),
        ];
        Dataset::new(2, 4, f, vec![vec![0], vec![1, 2]]).unwrap()
    }

    #[test]
    fn targets_union_positives_and_shortlist() {
        let d = tiny();
        let e = |l| Entry {
            label: l,
            score: 0.0,
            source: Source::Doc,
        };
        let sl = Shortlist {
            num_labels: 4,
            rows: vec![vec![e(3), e(1)], vec![e(0)]],
        };
        let t = ShortlistTargets::new(&d, &sl).unwrap();
        let mut out = Vec::new();
        assert_eq!(t.fill(0, &mut out).unwrap(), 2);
        assert_eq!(out, vec![(0, 1.0), (3, -1.0), (1, -1.0)]);
        assert_eq!(t.fill(1, &mut out).unwrap(), 1);
        assert_eq!(out, vec![(1, 1.0), (2, 1.0), (0, -1.0)]);

        let short = Shortlist {
            num_labels: 4,
            rows: vec![vec![]],
        };
        assert!(matches!(ShortlistTargets::new(&d, &short), Err(Error::MissingShortlist(1))));
    }
}
