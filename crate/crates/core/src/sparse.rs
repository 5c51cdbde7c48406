use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from parallel index/value arrays, checking that indices
    /// are strictly increasing and values finite.
    pub fn from_parts(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} indices vs {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam("indices not strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite value".into()));
        }
        Ok(Self { indices, values })
    }

    /// Builds a vector from unordered pairs; duplicate indices are summed.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Self { indices, values }
    }

    #[inline]
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.values)
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    /// Dot product with a dense vector.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    /// Dot product of two sparse vectors by merge.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                core::cmp::Ordering::Less => a += 1,
                core::cmp::Ordering::Greater => b += 1,
                core::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// `dense += alpha * self`
    pub fn add_to_dense(&self, alpha: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i as usize] += alpha * v;
        }
    }

    /// Scales to unit ℓ2 norm; the zero vector is left unchanged.
    pub fn normalize(&mut self) {
        math::normalize(&mut self.values);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_unsorted_indices() {
        assert!(SparseVector::from_parts(vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::from_parts(vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::from_parts(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn pairs_merge_duplicates() {
        let v = SparseVector::from_pairs(vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(v.indices(), &[1, 3]);
        assert_eq!(v.values(), &[2.0, 1.5]);
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let a = SparseVector::from_pairs(vec![(0, 1.0), (2, 3.0), (5, -1.0)]);
        let b = SparseVector::from_pairs(vec![(2, 2.0), (4, 7.0), (5, 1.0)]);
        let mut dense = vec![0.0; 6];
        b.add_to_dense(1.0, &mut dense);
        assert_eq!(a.dot(&b), 5.0);
        assert_eq!(a.dot_dense(&dense), 5.0);
    }
}
