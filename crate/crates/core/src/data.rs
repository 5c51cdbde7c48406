use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::SparseVector;
use crate::LabelId;

/// In-memory multi-label dataset: bag-of-words features plus sorted positive
/// label ids per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    num_features: usize,
    num_labels: usize,
    features: Vec<SparseVector>,
    labels: Vec<Vec<LabelId>>,
}

impl Dataset {
    /// Validates ids against the declared dimensions. Label lists are sorted
    /// and deduplicated.
    pub fn new(
        num_features: usize,
        num_labels: usize,
        features: Vec<SparseVector>,
        mut labels: Vec<Vec<LabelId>>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} feature rows vs {} label rows",
                features.len(),
                labels.len()
            )));
        }
        if num_features == 0 || num_labels == 0 {
            return Err(Error::InvalidParam("V and L must be positive".into()));
        }
        for (i, x) in features.iter().enumerate() {
            if let Some(m) = x.max_index() {
                if m as usize >= num_features {
                    return Err(Error::InvalidParam(alloc::format!(
                        "point {i}: feature {m} >= {num_features}"
                    )));
                }
            }
        }
        for (i, ls) in labels.iter_mut().enumerate() {
            ls.sort_unstable();
            ls.dedup();
            if let Some(&m) = ls.last() {
                if m as usize >= num_labels {
                    return Err(Error::InvalidParam(alloc::format!(
                        "point {i}: label {m} >= {num_labels}"
                    )));
                }
            }
        }
        Ok(Self {
            num_features,
            num_labels,
            features,
            labels,
        })
    }

    pub fn num_points(&self) -> usize {
        self.features.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn features(&self) -> &[SparseVector] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &SparseVector {
        &self.features[i]
    }

    pub fn labels(&self) -> &[Vec<LabelId>] {
        &self.labels
    }

    pub fn point_labels(&self, i: usize) -> &[LabelId] {
        &self.labels[i]
    }

    pub fn is_positive(&self, i: usize, label: LabelId) -> bool {
        self.labels[i].binary_search(&label).is_ok()
    }

    /// For every label, the sorted list of points tagged with it.
    pub fn label_points(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_labels];
        for (i, ls) in self.labels.iter().enumerate() {
            for &l in ls {
                out[l as usize].push(i as u32);
            }
        }
        out
    }

    /// Number of training positives per label.
    pub fn label_frequencies(&self) -> Vec<usize> {
        let mut f = vec![0usize; self.num_labels];
        for ls in &self.labels {
            for &l in ls {
                f[l as usize] += 1;
            }
        }
        f
    }

    pub fn total_positives(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }

    pub fn max_labels_per_point(&self) -> usize {
        self.labels.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Restriction to the given points, in the given order.
    pub fn subset(&self, points: &[usize]) -> Dataset {
        Dataset {
            num_features: self.num_features,
            num_labels: self.num_labels,
            features: points.iter().map(|&i| self.features[i].clone()).collect(),
            labels: points.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Replaces feature values with log-tf × smoothed idf
    /// (`ln((N+1)/(df+1)) + 1`) and ℓ2-normalises every document.
    pub fn recompute_tfidf(&mut self) {
        let n = self.num_points() as f64;
        let mut df = vec![0usize; self.num_features];
        for x in &self.features {
            for &t in x.indices() {
                df[t as usize] += 1;
            }
        }
        let idf: Vec<f64> = df
            .iter()
            .map(|&d| math::ln((n + 1.0) / (d as f64 + 1.0)) + 1.0)
            .collect();
        for x in &mut self.features {
            let idx: Vec<u32> = x.indices().to_vec();
            for (v, t) in x.values_mut().iter_mut().zip(idx) {
                *v = (1.0 + math::ln(*v)) * idf[t as usize];
            }
            x.normalize();
        }
    }
}

/// Summary counts of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_points: usize,
    pub num_features: usize,
    pub num_labels: usize,
    pub avg_labels_per_point: f64,
    pub avg_points_per_label: f64,
    pub avg_features_per_point: f64,
}

/// Averages over all points and all labels; labels without positives still
/// count towards the `avg_points_per_label` denominator.
pub fn compute_stats(d: &Dataset) -> DatasetStats {
    let n = d.num_points();
    let positives = d.total_positives() as f64;
    let nnz: usize = d.features().iter().map(SparseVector::len).sum();
    let per_point = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
    DatasetStats {
        num_points: n,
        num_features: d.num_features(),
        num_labels: d.num_labels(),
        avg_labels_per_point: per_point(positives),
        avg_points_per_label: positives / d.num_labels() as f64,
        avg_features_per_point: per_point(nnz as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> Dataset {
        Dataset::new(
            3,
            2,
            vec![
                SparseVector::from_pairs(vec![(0, 1.0), (2, 0.5)]),
                SparseVector::from_pairs(vec![(1, 2.0)]),
            ],
            vec![vec![0], vec![1]],
        )
        .unwrap()
    }

    #[test]
    fn stats_of_two_points() {
        let s = compute_stats(&two_points());
        assert_eq!(s.avg_labels_per_point, 1.0);
        assert_eq!(s.avg_features_per_point, 1.5);
        assert_eq!(s.avg_points_per_label, 1.0);
    }

    #[test]
    fn stats_with_unlabelled_point() {
        let d = Dataset::new(1, 1, vec![SparseVector::from_pairs(vec![(0, 1.0)])], vec![vec![]])
            .unwrap();
        let s = compute_stats(&d);
        assert_eq!(s.avg_labels_per_point, 0.0);
        assert_eq!(s.avg_points_per_label, 0.0);
    }

    #[test]
    fn transpose_is_consistent() {
        let d = two_points();
        let lp = d.label_points();
        let a: usize = lp.iter().map(Vec::len).sum();
        assert_eq!(a, d.total_positives());
        assert_eq!(lp[1], vec![1]);
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let e = Dataset::new(2, 2, vec![SparseVector::from_pairs(vec![(5, 1.0)])], vec![vec![0]]);
        assert!(e.is_err());
        let e = Dataset::new(2, 2, vec![SparseVector::from_pairs(vec![(0, 1.0)])], vec![vec![2]]);
        assert!(e.is_err());
    }

    #[test]
    fn tfidf_rows_are_unit_norm() {
        let mut d = two_points();
        d.recompute_tfidf();
        for x in d.features() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }
}
