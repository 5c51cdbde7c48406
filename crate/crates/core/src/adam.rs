use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::nn::SparseRows;

/// Bias-corrected Adam over a flat parameter buffer.
///
/// [`AdamState::step_rows`] is the lazy variant: only rows present in the
/// gradient have their moments decayed and their parameters moved, while the
/// bias correction uses the shared step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    fn corrections(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t as f64;
        (
            1.0 - math::powf(self.beta1, t),
            1.0 - math::powf(self.beta2, t),
        )
    }

    #[inline]
    fn update(&mut self, k: usize, g: f64, p: &mut f64, c1: f64, c2: f64) {
        let m = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
        let v = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
        self.m[k] = m;
        self.v[k] = v;
        *p -= self.learning_rate * (m / c1) / (math::sqrt(v / c2) + self.eps);
    }

    /// Dense update of every parameter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "adam state {} vs params {} / grads {}",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        let (c1, c2) = self.corrections();
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(k, g, p, c1, c2);
        }
        Ok(())
    }

    /// Lazy update of the rows touched in `grads`; `params` is row-major with
    /// rows of length `row_dim`.
    pub fn step_rows(&mut self, params: &mut [f64], row_dim: usize, grads: &SparseRows) -> Result<()> {
        if params.len() != self.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "adam state {} vs params {}",
                self.len(),
                params.len()
            )));
        }
        let (c1, c2) = self.corrections();
        for (id, g) in grads.iter() {
            let base = id as usize * row_dim;
            for (j, &gj) in g.iter().enumerate() {
                let k = base + j;
                let mut p = params[k];
                self.update(k, gj, &mut p, c1, c2);
                params[k] = p;
            }
        }
        Ok(())
    }
}

/// Functional form: applies one dense Adam step in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut s = AdamState::new(3, 0.1);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_minus_lr_sign() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, 0.1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = -0.1 / (1 + 1e-8)
        assert!((p[0] + 0.1).abs() < 1e-8);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        assert!((p[0] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2, 0.1);
        assert!(matches!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.1];
            let mut s = AdamState::new(2, 0.05);
            for k in 0..50 {
                let g = [p[0] * 2.0 + k as f64 * 1e-3, p[1] - 0.5];
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn lazy_rows_skip_untouched() {
        let mut p = vec![1.0; 6];
        let mut s = AdamState::new(6, 0.1);
        let mut g = SparseRows::new(3, 2);
        g.row_mut(1).copy_from_slice(&[1.0, -1.0]);
        s.step_rows(&mut p, 2, &g).unwrap();
        assert_eq!(&p[0..2], &[1.0, 1.0]);
        assert_eq!(&p[4..6], &[1.0, 1.0]);
        assert!((p[2] - 0.9).abs() < 1e-8 && (p[3] - 1.1).abs() < 1e-8);
    }
}
