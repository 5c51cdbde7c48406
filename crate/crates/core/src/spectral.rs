//! Spectral-norm budget for the residual block, enforced by power iteration
//! on cached singular vectors.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::math;

/// Relative change in σ̂ below which power iteration is considered converged.
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_STEPS: usize = 500;
/// Power-iteration steps run once when a block is created.
pub const WARMUP_STEPS: usize = 50;

/// Square matrix `R` with a spectral-norm budget `lambda`, producing
/// `x̂ = v + ReLU(R v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub r: Matrix,
    pub lambda: f64,
    /// Cached left singular vector estimate.
    pub u: Vec<f64>,
    /// Cached right singular vector estimate.
    pub v: Vec<f64>,
}

impl ResidualBlock {
    /// Zero residual (identity feature map) with randomly seeded power vectors.
    pub fn zeros(dim: usize, lambda: f64, seed: u64) -> Self {
        Self::from_matrix(Matrix::zeros(dim, dim), lambda, seed)
    }

    pub fn from_matrix(r: Matrix, lambda: f64, seed: u64) -> Self {
        assert_eq!(r.rows(), r.cols(), "residual must be square");
        let dim = r.rows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5bec_7a11);
        let mut u: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        math::normalize(&mut u);
        math::normalize(&mut v);
        let mut block = Self { r, lambda, u, v };
        block.power_steps(WARMUP_STEPS);
        block
    }

    pub fn dim(&self) -> usize {
        self.r.rows()
    }

    /// Runs `steps` power iterations and returns the last estimate of σ_max.
    /// A zero matrix yields 0 and leaves the cached vectors untouched.
    pub fn power_steps(&mut self, steps: usize) -> f64 {
        let mut sigma = 0.0;
        for _ in 0..steps {
            match self.power_step() {
                Some(s) => sigma = s,
                None => return 0.0,
            }
        }
        sigma
    }

    fn power_step(&mut self) -> Option<f64> {
        let mut v = self.r.mul_t_vec(&self.u);
        if math::normalize(&mut v) == 0.0 {
            // u may be orthogonal to the range; retry from the cached v.
            v.clone_from(&self.v);
        }
        let mut u = self.r.mul_vec(&v);
        let sigma = math::normalize(&mut u);
        if sigma == 0.0 {
            return None;
        }
        self.u = u;
        self.v = v;
        Some(sigma)
    }

    /// At least one power step, continued until σ̂ stabilises.
    pub fn estimate_sigma(&mut self) -> f64 {
        let mut prev = match self.power_step() {
            Some(s) => s,
            None => return 0.0,
        };
        for _ in 1..POWER_MAX_STEPS {
            let s = self.power_step().unwrap_or(0.0);
            if (s - prev).abs() <= POWER_TOL * s.max(f64::MIN_POSITIVE) {
                return s;
            }
            prev = s;
        }
        prev
    }

    /// Rescales `R` so its estimated spectral norm does not exceed `lambda`.
    /// Returns the estimate taken before rescaling.
    pub fn project(&mut self) -> f64 {
        let sigma = self.estimate_sigma();
        if sigma > self.lambda * (1.0 + POWER_TOL) {
            self.r.scale(self.lambda / sigma);
        }
        sigma
    }

    /// `x̂ = v + ReLU(R v)`
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.r.mul_vec_into(v, &mut out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = vi + math::relu(*o);
        }
        out
    }
}

/// Owned-value form of [`ResidualBlock::project`].
pub fn project_spectral(mut block: ResidualBlock) -> ResidualBlock {
    block.project();
    block
}

/// `x̂ = v + ReLU(R v)`
pub fn residual_forward(v: &[f64], block: &ResidualBlock) -> Vec<f64> {
    block.forward(v)
}
