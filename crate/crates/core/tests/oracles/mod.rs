//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's numeric code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn softplus(m: f64) -> f64 {
    if m > 30.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward pass with plain loops: returns `(bag, v, pre, xhat)`.
pub fn forward(
    x: &[(u32, f64)],
    e: &Dense,
    r: &Dense,
    mask_e: Option<&[f64]>,
    mask_r: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = r.len();
    let mut bag = vec![0.0; dim];
    for &(t, xt) in x {
        for d in 0..dim {
            bag[d] += xt * e[t as usize][d];
        }
    }
    let v: Vec<f64> = (0..dim)
        .map(|d| bag[d].max(0.0) * mask_e.map_or(1.0, |m| m[d]))
        .collect();
    let pre: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| r[i][j] * v[j]).sum()).collect();
    let xhat: Vec<f64> = (0..dim)
        .map(|d| v[d] + mask_r.map_or(1.0, |m| m[d]) * pre[d].max(0.0))
        .collect();
    (bag, v, pre, xhat)
}

/// `Σ ln(1 + exp(−y wᵀx̂))` over `targets`.
pub fn loss(
    x: &[(u32, f64)],
    e: &Dense,
    r: &Dense,
    w: &Dense,
    targets: &[(u32, f64)],
    mask_e: Option<&[f64]>,
    mask_r: Option<&[f64]>,
) -> f64 {
    let (_, _, _, xhat) = forward(x, e, r, mask_e, mask_r);
    targets
        .iter()
        .map(|&(l, y)| {
            let s: f64 = w[l as usize].iter().zip(&xhat).map(|(a, b)| a * b).sum();
            softplus(-y * s)
        })
        .sum()
}

/// Central difference of `f` at every coordinate of `p` (restored after).
pub fn central_diff(p: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..p.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + h;
            let up = f(p);
            p[k] = orig - h;
            let down = f(p);
            p[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn to_nalgebra(rows: usize, cols: usize, row_major: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, row_major)
}

/// Largest singular value by full SVD.
pub fn sigma_max(rows: usize, cols: usize, row_major: &[f64]) -> f64 {
    to_nalgebra(rows, cols, row_major)
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn random_dense<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect())
        .collect()
}

/// Prefix of the ranking by score desc, ties to the lower id.
pub fn ranking(pred: &[(u32, f64)], k: usize) -> Vec<u32> {
    let mut p = pred.to_vec();
    p.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    p.iter().take(k).map(|e| e.0).collect()
}

fn rel(truth: &[u32], l: u32) -> f64 {
    if truth.contains(&l) {
        1.0
    } else {
        0.0
    }
}

/// `(1/k) Σ_{l ≤ k} y_{r(l)}`
pub fn p_at_k(pred: &[(u32, f64)], truth: &[u32], k: usize) -> f64 {
    ranking(pred, k).iter().map(|&l| rel(truth, l)).sum::<f64>() / k as f64
}

/// `(1/k) Σ_{l ≤ k} y_{r(l)} / ln(l + 1)`
pub fn dcg_at_k(pred: &[(u32, f64)], truth: &[u32], k: usize) -> f64 {
    let r = ranking(pred, k);
    let mut s = 0.0;
    for (i, &l) in r.iter().enumerate() {
        s += rel(truth, l) / ((i + 1) as f64 + 1.0).ln();
    }
    s / k as f64
}

/// `DCG@k / Σ_{l=1}^{min(k, |y|)} 1/ln(l + 1)`
pub fn ndcg_at_k(pred: &[(u32, f64)], truth: &[u32], k: usize) -> f64 {
    let mut z = 0.0;
    for l in 1..=k.min(truth.len()) {
        z += 1.0 / (l as f64 + 1.0).ln();
    }
    dcg_at_k(pred, truth, k) / z
}

/// `(1/k) Σ_{l ≤ k} y_{r(l)} / p_{r(l)}`
pub fn psp_at_k(pred: &[(u32, f64)], truth: &[u32], p: &[f64], k: usize) -> f64 {
    ranking(pred, k).iter().map(|&l| rel(truth, l) / p[l as usize]).sum::<f64>() / k as f64
}

/// `(1/k) Σ_{l ≤ k} y_{r(l)} / (p_{r(l)} ln(l + 1))`
pub fn psdcg_at_k(pred: &[(u32, f64)], truth: &[u32], p: &[f64], k: usize) -> f64 {
    let r = ranking(pred, k);
    let mut s = 0.0;
    for (i, &l) in r.iter().enumerate() {
        s += rel(truth, l) / (p[l as usize] * ((i + 1) as f64 + 1.0).ln());
    }
    s / k as f64
}

/// `PSDCG@k / Σ_{l=1}^{k} 1/(ln l + 1)`
pub fn psndcg_at_k(pred: &[(u32, f64)], truth: &[u32], p: &[f64], k: usize) -> f64 {
    let mut z = 0.0;
    for l in 1..=k {
        z += 1.0 / ((l as f64).ln() + 1.0);
    }
    psdcg_at_k(pred, truth, p, k) / z
}

/// `1 / (1 + C e^{−A ln(N_l + B)})`, `C = max(0, (ln N − 1)(B + 1)^A)`.
pub fn propensity(n_l: usize, n: usize, a: f64, b: f64) -> f64 {
    let c = (((n as f64).ln() - 1.0) * (b + 1.0).powf(a)).max(0.0);
    1.0 / (1.0 + c * (-a * (n_l as f64 + b).ln()).exp())
}

/// Plain full-batch-order Adam with global step count.
pub struct Adam {
    pub lr: f64,
    pub t: i32,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64]) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for k in 0..p.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        }
    }
}
