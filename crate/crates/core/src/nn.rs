//! Embedding-bag encoder, residual block and one-vs-all logistic head with
//! hand-derived gradients.
//!
//! Forward pass for a sparse document `x`:
//!
//! ```text
//! v     = ReLU(Σ_t x_t e_t)          (embedding bag)
//! v'    = drop(v)
//! x̂     = v' + drop(ReLU(R v'))      (residual block)
//! s_l   = w_lᵀ x̂                     (per-label score)
//! loss  = Σ_l ln(1 + exp(-y_l s_l))
//! ```
//!
//! ReLU's subgradient at exactly zero is taken as zero.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::math;
use crate::spectral::ResidualBlock;
use crate::sparse::SparseVector;
use crate::LabelId;

/// Token embeddings `E` (D×V), stored token-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBank {
    dim: usize,
    vocab: usize,
    data: Vec<f64>,
}

impl EmbeddingBank {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self {
            dim,
            vocab,
            data: vec![0.0; vocab * dim],
        }
    }

    /// `data` holds `vocab` consecutive token vectors of length `dim`.
    pub fn from_token_major(vocab: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != vocab * dim || dim == 0 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "embedding payload {} for {vocab}x{dim}",
                data.len()
            )));
        }
        Ok(Self { dim, vocab, data })
    }

    /// i.i.d. uniform(−1/√D, 1/√D) entries.
    pub fn random<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / math::sqrt(dim as f64);
        let data = (0..vocab * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self { dim, vocab, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vocab(&self) -> usize {
        self.vocab
    }

    #[inline]
    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn token_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Pre-activation `Σ_t x_t e_t`.
    pub fn bag(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        for (t, w) in x.iter() {
            if t as usize >= self.vocab {
                return Err(Error::FeatureOutOfRange(t));
            }
            math::axpy(w, self.token(t as usize), &mut out);
        }
        Ok(out)
    }
}

/// `v = ReLU(Σ_t x_t e_t)`
pub fn embed_bag(x: &SparseVector, e: &EmbeddingBank) -> Result<Vec<f64>> {
    let mut v = e.bag(x)?;
    v.iter_mut().for_each(|a| *a = math::relu(*a));
    Ok(v)
}

/// One-vs-all classifiers `W` (D×K), stored label-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierBank {
    dim: usize,
    labels: usize,
    data: Vec<f64>,
}

impl ClassifierBank {
    pub fn zeros(labels: usize, dim: usize) -> Self {
        Self {
            dim,
            labels,
            data: vec![0.0; labels * dim],
        }
    }

    pub fn from_label_major(labels: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != labels * dim {
            return Err(Error::ShapeMismatch(alloc::format!(
                "classifier payload {} for {labels}x{dim}",
                data.len()
            )));
        }
        Ok(Self { dim, labels, data })
    }

    /// Xavier-uniform per classifier: U(−√(6/(D+1)), √(6/(D+1))).
    pub fn xavier<R: Rng>(labels: usize, dim: usize, rng: &mut R) -> Self {
        let bound = math::sqrt(6.0 / (dim as f64 + 1.0));
        let data = (0..labels * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self { dim, labels, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.labels
    }

    #[inline]
    pub fn column(&self, l: usize) -> &[f64] {
        &self.data[l * self.dim..(l + 1) * self.dim]
    }

    #[inline]
    pub fn column_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.dim..(l + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn score(&self, l: LabelId, xhat: &[f64]) -> f64 {
        math::dot(self.column(l as usize), xhat)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Inverted-dropout scale factors: each coordinate is 0 with probability `p`
/// and `1/(1-p)` otherwise.
pub fn dropout_mask<R: Rng>(dim: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParam(alloc::format!("dropout p = {p}")));
    }
    let keep = 1.0 / (1.0 - p);
    Ok((0..dim)
        .map(|_| if p > 0.0 && rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect())
}

/// Applies inverted dropout in training mode; identity otherwise.
pub fn apply_dropout<R: Rng>(v: &[f64], p: f64, training: bool, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParam(alloc::format!("dropout p = {p}")));
    }
    if !training || p == 0.0 {
        return Ok(v.to_vec());
    }
    let mask = dropout_mask(v.len(), p, rng)?;
    Ok(v.iter().zip(&mask).map(|(a, m)| a * m).collect())
}

/// Dropout masks for the two ReLU outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Masks {
    pub embedding: Vec<f64>,
    pub residual: Vec<f64>,
}

impl Masks {
    pub fn sample<R: Rng>(dim: usize, p: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            embedding: dropout_mask(dim, p, rng)?,
            residual: dropout_mask(dim, p, rng)?,
        })
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Σ_t x_t e_t`
    pub bag: Vec<f64>,
    /// Residual input: ReLU(bag), after dropout.
    pub v: Vec<f64>,
    /// `R v`
    pub residual_pre: Vec<f64>,
    pub xhat: Vec<f64>,
}

pub fn forward(
    x: &SparseVector,
    e: &EmbeddingBank,
    r: &Matrix,
    masks: Option<&Masks>,
) -> Result<ForwardCache> {
    let bag = e.bag(x)?;
    let mut v: Vec<f64> = bag.iter().map(|&a| math::relu(a)).collect();
    if let Some(m) = masks {
        v.iter_mut().zip(&m.embedding).for_each(|(a, s)| *a *= s);
    }
    let residual_pre = r.mul_vec(&v);
    let mut xhat = v.clone();
    for (d, (&pre, out)) in residual_pre.iter().zip(xhat.iter_mut()).enumerate() {
        let s = masks.map_or(1.0, |m| m.residual[d]);
        *out += s * math::relu(pre);
    }
    Ok(ForwardCache {
        bag,
        v,
        residual_pre,
        xhat,
    })
}

/// Inference features `(v, x̂)` without dropout.
pub fn features(x: &SparseVector, e: &EmbeddingBank, block: &ResidualBlock) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = forward(x, e, &block.r, None)?;
    Ok((c.v, c.xhat))
}

/// Row-sparse gradient storage with O(touched) reset.
#[derive(Debug, Clone)]
pub struct SparseRows {
    dim: usize,
    slot: Vec<u32>,
    ids: Vec<u32>,
    data: Vec<f64>,
}

impl SparseRows {
    const EMPTY: u32 = u32::MAX;

    pub fn new(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            slot: vec![Self::EMPTY; rows],
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let s = self.slot[id as usize];
        let s = if s == Self::EMPTY {
            let s = self.ids.len() as u32;
            self.slot[id as usize] = s;
            self.ids.push(id);
            self.data.resize(self.data.len() + self.dim, 0.0);
            s
        } else {
            s
        } as usize;
        &mut self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        let s = self.slot[id as usize];
        (s != Self::EMPTY).then(|| &self.data[s as usize * self.dim..(s as usize + 1) * self.dim])
    }

    /// Touched ids in first-touch order.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.ids
            .iter()
            .enumerate()
            .map(move |(s, &id)| (id, &self.data[s * self.dim..(s + 1) * self.dim]))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn clear(&mut self) {
        for &id in &self.ids {
            self.slot[id as usize] = Self::EMPTY;
        }
        self.ids.clear();
        self.data.clear();
    }
}

/// Gradient accumulators for one mini-batch. `None` fields are frozen.
#[derive(Debug, Clone)]
pub struct Grads {
    pub classifiers: SparseRows,
    pub residual: Option<Matrix>,
    pub embeddings: Option<SparseRows>,
}

impl Grads {
    pub fn new(dim: usize, num_labels: usize, vocab: usize, train_residual: bool, train_embeddings: bool) -> Self {
        Self {
            classifiers: SparseRows::new(num_labels, dim),
            residual: train_residual.then(|| Matrix::zeros(dim, dim)),
            embeddings: train_embeddings.then(|| SparseRows::new(vocab, dim)),
        }
    }

    pub fn clear(&mut self) {
        self.classifiers.clear();
        if let Some(r) = &mut self.residual {
            r.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        }
        if let Some(e) = &mut self.embeddings {
            e.clear();
        }
    }
}

/// Adds `scale ·` the gradients of one point's loss over `targets`
/// (`(label, y)` with `y = ±1`) into `grads`; returns the unscaled loss.
pub fn accumulate_point(
    x: &SparseVector,
    e: &EmbeddingBank,
    r: &Matrix,
    w: &ClassifierBank,
    targets: &[(LabelId, f64)],
    masks: Option<&Masks>,
    scale: f64,
    grads: &mut Grads,
) -> Result<f64> {
    let cache = forward(x, e, r, masks)?;
    let dim = e.dim();
    let mut g_xhat = vec![0.0; dim];
    let mut loss = 0.0;
    for &(l, y) in targets {
        let col = w.column(l as usize);
        let s = math::dot(col, &cache.xhat);
        loss += math::softplus(-y * s);
        // d/ds ln(1+exp(-ys)) = -y σ(-ys)
        let g = -y * math::sigmoid(-y * s);
        if g != 0.0 {
            math::axpy(scale * g, &cache.xhat, grads.classifiers.row_mut(l));
            math::axpy(g, col, &mut g_xhat);
        } else {
            grads.classifiers.row_mut(l);
        }
    }
    backward(x, r, &cache, &g_xhat, masks, scale, grads);
    Ok(loss)
}

fn backward(
    x: &SparseVector,
    r: &Matrix,
    cache: &ForwardCache,
    g_xhat: &[f64],
    masks: Option<&Masks>,
    scale: f64,
    grads: &mut Grads,
) {
    let dim = g_xhat.len();
    let g_res_pre: Vec<f64> = (0..dim)
        .map(|d| {
            // Right derivative at 0.
            if cache.residual_pre[d] >= 0.0 {
                g_xhat[d] * masks.map_or(1.0, |m| m.residual[d])
            } else {
                0.0
            }
        })
        .collect();
    if let Some(gr) = &mut grads.residual {
        gr.add_outer(scale, &g_res_pre, &cache.v);
    }
    if let Some(ge) = &mut grads.embeddings {
        let mut g_v = r.mul_t_vec(&g_res_pre);
        math::axpy(1.0, g_xhat, &mut g_v);
        for d in 0..dim {
            let pass = cache.bag[d] > 0.0;
            g_v[d] = if pass { g_v[d] * masks.map_or(1.0, |m| m.embedding[d]) } else { 0.0 };
        }
        for (t, xt) in x.iter() {
            math::axpy(scale * xt, &g_v, ge.row_mut(t));
        }
    }
}

/// Loss and gradients of one point, in plain owned form.
#[derive(Debug, Clone)]
pub struct PointGradients {
    pub loss: f64,
    /// Gradient w.r.t. each touched token embedding.
    pub embeddings: Vec<(u32, Vec<f64>)>,
    pub residual: Matrix,
    /// Gradient w.r.t. each touched classifier column.
    pub classifiers: Vec<(LabelId, Vec<f64>)>,
}

/// Summed logistic loss over `pos ∪ neg` and its exact gradients w.r.t. the
/// touched classifiers, `R` and the touched token embeddings (no dropout).
pub fn logistic_loss_and_grads(
    x: &SparseVector,
    e: &EmbeddingBank,
    block: &ResidualBlock,
    w: &ClassifierBank,
    pos: &[LabelId],
    neg: &[LabelId],
) -> Result<PointGradients> {
    if pos.iter().any(|p| neg.contains(p)) {
        return Err(Error::InvalidParam("positive and negative sets overlap".into()));
    }
    let targets: Vec<(LabelId, f64)> = pos
        .iter()
        .map(|&l| (l, 1.0))
        .chain(neg.iter().map(|&l| (l, -1.0)))
        .collect();
    let mut grads = Grads::new(e.dim(), w.num_labels(), e.vocab(), true, true);
    let loss = accumulate_point(x, e, &block.r, w, &targets, None, 1.0, &mut grads)?;
    let rows = |s: &SparseRows| s.iter().map(|(id, g)| (id, g.to_vec())).collect();
    Ok(PointGradients {
        loss,
        embeddings: rows(grads.embeddings.as_ref().unwrap()),
        residual: grads.residual.unwrap(),
        classifiers: rows(&grads.classifiers),
    })
}
