//! Regression trees: the M5 model tree and the reduced-error-pruned tree.
//!
//! Both learners share the split search below. Candidate thresholds are the
//! midpoints between consecutive distinct sorted values of a feature; rows
//! with a value `<=` the threshold go left. The best split maximizes the
//! configured criterion, with exact ties resolved toward the lower feature
//! index and then the lower threshold.

mod linear;
mod m5;
mod reptree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TabularProblem;

pub use linear::{adjusted_error, fit_linear, least_squares, pruning_factor, LinearFit, LinearModel};
pub use m5::{m5p_fit, M5Node, M5Tree};
pub use reptree::{grow_unpruned, reptree_fit, PruneReport, RepNode, RepTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("query has {got} features, tree expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query contains a non-finite value")]
    NonFiniteQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Minimum rows per child of a split.
    pub min_instances: usize,
    /// Growth stops once a node's target standard deviation falls below this
    /// fraction of the root's.
    pub sd_stop_fraction: f64,
    /// M5 smoothing constant; 0 disables smoothing.
    pub smoothing_k: f64,
    pub prune: bool,
    /// Share of rows held out for reduced-error pruning (RepTree only).
    pub prune_fraction: f64,
    /// Seed for the RepTree grow/prune shuffle.
    pub seed: u64,
}

impl TreeParams {
    pub fn m5() -> Self {
        Self {
            min_instances: 4,
            sd_stop_fraction: 0.05,
            smoothing_k: 15.0,
            prune: true,
            prune_fraction: 1.0 / 3.0,
            seed: 1,
        }
    }

    pub fn reptree() -> Self {
        Self { min_instances: 2, ..Self::m5() }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_instances < 1 {
            return Err(TreeError::InvalidParams("min_instances must be >= 1".into()));
        }
        if !(self.sd_stop_fraction > 0.0 && self.sd_stop_fraction < 1.0) {
            return Err(TreeError::InvalidParams("sd_stop_fraction must be in (0, 1)".into()));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(TreeError::InvalidParams("prune_fraction must be in (0, 1)".into()));
        }
        if !(self.smoothing_k >= 0.0 && self.smoothing_k.is_finite()) {
            return Err(TreeError::InvalidParams("smoothing_k must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for TreeParams {
    fn default() -> Self {
        Self::m5()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    /// sd(T) − Σ |Tᵢ|/|T| · sd(Tᵢ)
    StdDevReduction,
    /// var(T) − Σ |Tᵢ|/|T| · var(Tᵢ)
    VarianceReduction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub n_left: usize,
}

/// Every admissible split of `rows` on `feature`, in increasing threshold
/// order. A split is admissible when both sides hold at least `min_leaf`
/// rows.
pub fn feature_splits(
    problem: &TabularProblem,
    rows: &[usize],
    feature: usize,
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Vec<SplitCandidate> {
    let n = rows.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return Vec::new();
    }
    let y = problem.target();
    let mut order: Vec<(f64, usize)> = rows.iter().map(|&i| (problem.value(i, feature), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let nf = n as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / nf;
    let (mut s_tot, mut q_tot) = (0.0, 0.0);
    for &i in rows {
        let d = y[i] - mean;
        s_tot += d;
        q_tot += d * d;
    }
    let parent_var = variance(s_tot, q_tot, nf);
    let parent = spread(criterion, parent_var);

    let mut suffix = vec![(0.0, 0.0); n + 1];
    for pos in (0..n).rev() {
        let d = y[order[pos].1] - mean;
        suffix[pos] = (suffix[pos + 1].0 + d, suffix[pos + 1].1 + d * d);
    }

    let mut out = Vec::new();
    let (mut sl, mut ql) = (0.0, 0.0);
    for pos in 0..n - 1 {
        let d = y[order[pos].1] - mean;
        sl += d;
        ql += d * d;
        let (a, b) = (order[pos].0, order[pos + 1].0);
        let nl = pos + 1;
        if a == b || nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let (nlf, nrf) = (nl as f64, (n - nl) as f64);
        let left = spread(criterion, variance(sl, ql, nlf));
        let (sr, qr) = suffix[pos + 1];
        let right = spread(criterion, variance(sr, qr, nrf));
        let mut threshold = 0.5 * (a + b);
        if threshold >= b {
            threshold = a;
        }
        out.push(SplitCandidate {
            feature,
            threshold,
            gain: parent - (nlf / nf) * left - (nrf / nf) * right,
            n_left: nl,
        });
    }
    out
}

fn variance(sum: f64, sum_sq: f64, n: f64) -> f64 {
    ((sum_sq - sum * sum / n) / n).max(0.0)
}

fn spread(criterion: SplitCriterion, var: f64) -> f64 {
    match criterion {
        SplitCriterion::StdDevReduction => var.sqrt(),
        SplitCriterion::VarianceReduction => var,
    }
}

/// Relative gain difference below which two splits count as tied. Splits
/// inducing the same partition can differ in the last bits of their gain.
const GAIN_TIE: f64 = 1e-10;

/// The best split over `features` (visited in ascending order), or `None`
/// if no admissible split has positive gain. Ties, up to [`GAIN_TIE`], go to
/// the lower feature index and then the lower threshold.
pub fn best_split(
    problem: &TabularProblem,
    rows: &[usize],
    features: &[usize],
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<SplitCandidate> = None;
    for f in sorted {
        for c in feature_splits(problem, rows, f, criterion, min_leaf) {
            if c.gain > 0.0 && best.is_none_or(|b| c.gain > b.gain + GAIN_TIE * b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

/// Population standard deviation of the targets of `rows`.
pub(crate) fn target_sd(problem: &TabularProblem, rows: &[usize]) -> f64 {
    let y = problem.target();
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    (rows.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub(crate) fn check_query(query: &[f64], n_features: usize) -> Result<(), TreeError> {
    if query.len() != n_features {
        return Err(TreeError::DimensionMismatch { expected: n_features, got: query.len() });
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(TreeError::NonFiniteQuery);
    }
    Ok(())
}

/// Structure of a grown, not yet finalized tree: each node keeps its rows.
pub(crate) struct GrownNode {
    pub rows: Vec<usize>,
    pub split: Option<(SplitCandidate, Box<GrownNode>, Box<GrownNode>)>,
}

pub(crate) struct GrowConfig {
    pub criterion: SplitCriterion,
    pub min_instances: usize,
    pub sd_stop_fraction: f64,
}

/// Recursive top-down growth. `features_for` is asked, in preorder node
/// numbering, which features a node may split on.
pub(crate) fn grow(
    problem: &TabularProblem,
    rows: Vec<usize>,
    cfg: &GrowConfig,
    features_for: &mut dyn FnMut(u64) -> Vec<usize>,
) -> GrownNode {
    let root_sd = target_sd(problem, &rows);
    let mut counter = 0u64;
    grow_node(problem, rows, cfg, root_sd, &mut counter, features_for)
}

fn grow_node(
    problem: &TabularProblem,
    rows: Vec<usize>,
    cfg: &GrowConfig,
    root_sd: f64,
    counter: &mut u64,
    features_for: &mut dyn FnMut(u64) -> Vec<usize>,
) -> GrownNode {
    let id = *counter;
    *counter += 1;
    let min = cfg.min_instances.max(1);
    if rows.len() < 2 * min || target_sd(problem, &rows) < cfg.sd_stop_fraction * root_sd {
        return GrownNode { rows, split: None };
    }
    let features = features_for(id);
    let Some(split) = best_split(problem, &rows, &features, cfg.criterion, min) else {
        return GrownNode { rows, split: None };
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| problem.value(i, split.feature) <= split.threshold);
    let l = grow_node(problem, left, cfg, root_sd, counter, features_for);
    let r = grow_node(problem, right, cfg, root_sd, counter, features_for);
    GrownNode { rows, split: Some((split, Box::new(l), Box::new(r))) }
}
