//! Distance-weighted k-nearest-neighbor regression and classification.
//!
//! Features are rescaled to [0, 1] with the per-column range of the
//! training data, then compared with the Manhattan (L1) distance. Each of the
//! k nearest neighbors votes with weight 1/d. Neighbors at distance zero
//! override everything else: the prediction is the plain mean (or vote) of
//! the zero-distance neighbors among the k.
//!
//! Distance ties are resolved by original row index, lowest first, so the
//! neighbor set is always exactly k rows and fully deterministic.

use thiserror::Error;

use crate::data::{SeverityClass, TabularProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnnError {
    #[error("k = {k} is invalid for {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query contains a non-finite value")]
    NonFiniteQuery,
    #[error("{labels} labels for {rows} rows")]
    LabelMismatch { labels: usize, rows: usize },
}

/// A fitted exhaustive-search kNN model. `T` is the stored target type:
/// `f64` for regression, [`SeverityClass`] for classification.
#[derive(Debug, Clone)]
pub struct KnnModel<T> {
    /// Training rows already scaled to [0, 1].
    scaled: Vec<f64>,
    targets: Vec<T>,
    k: usize,
    ranges: Vec<(f64, f64)>,
}

impl KnnModel<f64> {
    pub fn fit(problem: &TabularProblem, k: usize) -> Result<Self, KnnError> {
        Self::fit_with_targets(problem, problem.target().to_vec(), k)
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64, KnnError> {
        let neighbors = self.neighbors(query)?;
        let zero: Vec<_> = neighbors.iter().filter(|n| n.1 == 0.0).collect();
        if !zero.is_empty() {
            let s: f64 = zero.iter().map(|n| self.targets[n.0]).sum();
            return Ok(s / zero.len() as f64);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(i, d) in &neighbors {
            let w = 1.0 / d;
            num += w * self.targets[i];
            den += w;
        }
        Ok(num / den)
    }
}

impl KnnModel<SeverityClass> {
    pub fn fit_labels(problem: &TabularProblem, labels: Vec<SeverityClass>, k: usize) -> Result<Self, KnnError> {
        Self::fit_with_targets(problem, labels, k)
    }

    /// Weighted vote; exact ties go to the more severe class.
    pub fn predict_class(&self, query: &[f64]) -> Result<SeverityClass, KnnError> {
        let neighbors = self.neighbors(query)?;
        let any_zero = neighbors.iter().any(|n| n.1 == 0.0);
        let mut votes = [0.0f64; 3];
        for &(i, d) in &neighbors {
            let w = match (any_zero, d == 0.0) {
                (true, true) => 1.0,
                (true, false) => continue,
                (false, _) => 1.0 / d,
            };
            votes[self.targets[i].index()] += w;
        }
        let mut best = SeverityClass::Mild;
        for class in SeverityClass::ALL {
            if votes[class.index()] >= votes[best.index()] {
                best = class;
            }
        }
        Ok(best)
    }
}

impl<T: Clone> KnnModel<T> {
    fn fit_with_targets(problem: &TabularProblem, targets: Vec<T>, k: usize) -> Result<Self, KnnError> {
        let n = problem.n_rows();
        if k == 0 || k > n {
            return Err(KnnError::KTooLarge { k, n });
        }
        if targets.len() != n {
            return Err(KnnError::LabelMismatch { labels: targets.len(), rows: n });
        }
        let ranges: Vec<(f64, f64)> = (0..problem.n_features())
            .map(|j| {
                problem.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])))
            })
            .collect();
        let mut scaled = Vec::with_capacity(n * ranges.len());
        for row in problem.rows() {
            scaled.extend(row.iter().zip(&ranges).map(|(&v, &r)| scale(v, r)));
        }
        Ok(Self { scaled, targets, k, ranges })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// The k nearest training rows as (row index, distance), nearest first.
    pub fn neighbors(&self, query: &[f64]) -> Result<Vec<(usize, f64)>, KnnError> {
        let f = self.ranges.len();
        if query.len() != f {
            return Err(KnnError::DimensionMismatch { expected: f, got: query.len() });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(KnnError::NonFiniteQuery);
        }
        let q: Vec<f64> = query.iter().zip(&self.ranges).map(|(&v, &r)| scale(v, r)).collect();
        let mut dist: Vec<(usize, f64)> = self
            .scaled
            .chunks_exact(f)
            .enumerate()
            .map(|(i, row)| (i, row.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum()))
            .collect();
        let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance);
            dist.truncate(self.k);
        }
        dist.sort_by(by_distance);
        Ok(dist)
    }
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}
