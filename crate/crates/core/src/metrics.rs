//! Pearson correlation, mean absolute error, feature ranking and
//! classification tallies.
//!
//! All sums use compensated (Neumaier) accumulation in index order, so a
//! given input always produces the same bits regardless of where it was
//! computed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SeverityClass, TabularProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("correlation undefined: input has zero variance")]
    DegenerateInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = KahanSum::default();
    values.into_iter().for_each(|v| s.add(v));
    s.total()
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (KahanSum::default(), KahanSum::default(), KahanSum::default());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let (sxx, syy) = (sxx.total(), syy.total());
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricsError::DegenerateInput);
    }
    Ok((sxy.total() / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    Ok(sum(predicted.iter().zip(actual).map(|(p, a)| (p - a).abs())) / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub feature: String,
    pub column: usize,
    /// `None` when the column (or the target) is constant.
    pub correlation: Option<f64>,
}

/// Features ordered by descending correlation with the target. Ties keep
/// column order; undefined correlations sort last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankingEntry>,
}

pub fn rank_features(problem: &TabularProblem) -> Result<FeatureRanking, MetricsError> {
    if problem.n_rows() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: problem.n_rows() });
    }
    let mut entries: Vec<RankingEntry> = problem
        .feature_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let correlation = match pearson(&problem.column(j), problem.target()) {
                Ok(r) => Some(r),
                Err(MetricsError::DegenerateInput) => None,
                Err(e) => return Err(e),
            };
            Ok(RankingEntry { feature: name.clone(), column: j, correlation })
        })
        .collect::<Result<_, _>>()?;
    entries.sort_by(|a, b| match (a.correlation, b.correlation) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.column.cmp(&b.column)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.column.cmp(&b.column),
    });
    Ok(FeatureRanking { entries })
}

/// Accuracy and a 3×3 confusion matrix indexed `[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTally {
    pub accuracy: f64,
    pub confusion: [[usize; 3]; 3],
}

pub fn classification_tally(
    predicted: &[SeverityClass],
    actual: &[SeverityClass],
) -> Result<ClassificationTally, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, a) in predicted.iter().zip(actual) {
        confusion[a.index()][p.index()] += 1;
    }
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    Ok(ClassificationTally { accuracy: correct as f64 / predicted.len() as f64, confusion })
}
