//! Mini-batch Adam loop shared by the surrogate, extreme and re-ranker stages.
//!
//! Each stage only differs in which `(label, ±1)` targets a point contributes
//! and in which parameter groups are trainable. Classifier and embedding
//! updates are lazy (rows outside the batch are untouched, moments included);
//! the residual is updated densely and projected back onto its spectral budget
//! after every step.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, ClassifierBank, EmbeddingBank, Grads, Masks};
use crate::spectral::ResidualBlock;
use crate::LabelId;

/// Encoder + residual + classifier bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub embeddings: EmbeddingBank,
    pub residual: ResidualBlock,
    pub classifiers: ClassifierBank,
}

impl Network {
    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Inference features `(v, x̂)`.
    pub fn features(&self, x: &crate::SparseVector) -> Result<(Vec<f64>, Vec<f64>)> {
        nn::features(x, &self.embeddings, &self.residual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub train_embeddings: bool,
    pub train_residual: bool,
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParam("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParam("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub heldout_p1: Option<f64>,
}

/// Per-point touched-label statistics over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TouchStats {
    pub max_touched: usize,
    pub max_positives: usize,
    pub total_touched: u64,
    pub point_steps: u64,
    /// Points whose touched count exceeded `shortlist_len + |P_i|`.
    pub violations: u64,
}

impl TouchStats {
    pub fn mean_touched(&self) -> f64 {
        if self.point_steps == 0 {
            0.0
        } else {
            self.total_touched as f64 / self.point_steps as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub touched: TouchStats,
}

/// Callbacks around the loop. `evaluate` is called before the first epoch and
/// after each epoch; `on_epoch` receives each finished log line.
pub trait TrainHooks {
    fn evaluate(&mut self, _model: &Network) -> Option<f64> {
        None
    }

    fn on_epoch(&mut self, _log: &EpochLog) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Source of per-point training targets.
pub trait Targets {
    /// Clears `out` and fills it with `(label, y)` pairs, `y = ±1`. Returns
    /// the shortlist size the point is entitled to beyond its positives.
    fn fill(&self, point: usize, out: &mut Vec<(LabelId, f64)>) -> Result<usize>;
}

/// Visiting order of `n` points in `epoch` (1-based).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Optimiser state for all parameter groups of a [`Network`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    classifiers: AdamState,
    residual: Option<AdamState>,
    embeddings: Option<AdamState>,
}

impl Optimizer {
    pub fn new(net: &Network, p: &TrainParams) -> Self {
        Self {
            classifiers: AdamState::new(net.classifiers.as_slice().len(), p.learning_rate),
            residual: p.train_residual.then(|| AdamState::new(net.residual.r.as_slice().len(), p.learning_rate)),
            embeddings: p.train_embeddings.then(|| AdamState::new(net.embeddings.as_slice().len(), p.learning_rate)),
        }
    }

    /// Applies one step from `grads` and re-projects the residual.
    pub fn apply(&mut self, net: &mut Network, grads: &Grads) -> Result<()> {
        let dim = net.dim();
        self.classifiers.step_rows(net.classifiers.as_mut_slice(), dim, &grads.classifiers)?;
        if let (Some(state), Some(g)) = (&mut self.residual, &grads.residual) {
            state.step(net.residual.r.as_mut_slice(), g.as_slice())?;
        }
        if let (Some(state), Some(g)) = (&mut self.embeddings, &grads.embeddings) {
            state.step_rows(net.embeddings.as_mut_slice(), dim, g)?;
        }
        net.residual.project();
        Ok(())
    }
}

/// Mean per-point loss over `points` without dropout.
pub fn mean_loss<T: Targets + ?Sized>(net: &Network, d: &Dataset, points: &[usize], targets: &T) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut grads = Grads::new(net.dim(), net.classifiers.num_labels(), net.embeddings.vocab(), false, false);
    let mut buf = Vec::new();
    let mut total = 0.0;
    for &i in points {
        targets.fill(i, &mut buf)?;
        total += nn::accumulate_point(
            d.feature(i),
            &net.embeddings,
            &net.residual.r,
            &net.classifiers,
            &buf,
            None,
            0.0,
            &mut grads,
        )?;
        grads.clear();
    }
    Ok(total / points.len() as f64)
}

/// Trains `net` on `points` of `d`. Single-threaded and bit-reproducible for
/// fixed inputs.
pub fn train<T: Targets + ?Sized, H: TrainHooks + ?Sized>(
    net: &mut Network,
    d: &Dataset,
    points: &[usize],
    targets: &T,
    params: &TrainParams,
    hooks: &mut H,
) -> Result<TrainLog> {
    params.validate()?;
    let mut log = TrainLog::default();
    let first = EpochLog {
        epoch: 0,
        mean_loss: mean_loss(net, d, points, targets)?,
        heldout_p1: hooks.evaluate(net),
    };
    if !first.mean_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    hooks.on_epoch(&first);
    log.epochs.push(first);

    let dim = net.dim();
    let mut opt = Optimizer::new(net, params);
    let mut grads = Grads::new(
        dim,
        net.classifiers.num_labels(),
        net.embeddings.vocab(),
        params.train_residual,
        params.train_embeddings,
    );
    let mut mask_rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x000d_4090_u64);
    let mut buf = Vec::new();
    for epoch in 1..=params.epochs {
        let order = epoch_order(points.len(), params.seed, epoch);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(params.batch_size).enumerate() {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &k in batch {
                let i = points[k];
                let allowance = targets.fill(i, &mut buf)?;
                let positives = buf.iter().filter(|t| t.1 > 0.0).count();
                let touched = &mut log.touched;
                touched.max_touched = touched.max_touched.max(buf.len());
                touched.max_positives = touched.max_positives.max(positives);
                touched.total_touched += buf.len() as u64;
                touched.point_steps += 1;
                if buf.len() > allowance + positives {
                    touched.violations += 1;
                }
                let masks = if params.dropout > 0.0 {
                    Some(Masks::sample(dim, params.dropout, &mut mask_rng)?)
                } else {
                    None
                };
                batch_loss += nn::accumulate_point(
                    d.feature(i),
                    &net.embeddings,
                    &net.residual.r,
                    &net.classifiers,
                    &buf,
                    masks.as_ref(),
                    scale,
                    &mut grads,
                )?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += batch_loss;
            opt.apply(net, &grads)?;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: if points.is_empty() { 0.0 } else { epoch_loss / points.len() as f64 },
            heldout_p1: hooks.evaluate(net),
        };
        hooks.on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}

/// Structural check of the per-point cost contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAudit {
    pub cap: usize,
    pub max_touched: usize,
    pub max_positives: usize,
    pub mean_touched: f64,
    /// `cap + max |P_i|`
    pub bound: usize,
    pub passes: bool,
}

/// Verifies `max_i |Ŝ_i| ≤ cap + max_i |P_i|` and that no single point ever
/// touched more than its own shortlist plus positives.
pub fn per_step_cost_audit(log: &TrainLog, cap: usize) -> CostAudit {
    let t = log.touched;
    let bound = cap + t.max_positives;
    CostAudit {
        cap,
        max_touched: t.max_touched,
        max_positives: t.max_positives,
        mean_touched: t.mean_touched(),
        bound,
        passes: t.max_touched <= bound && t.violations == 0,
    }
}
