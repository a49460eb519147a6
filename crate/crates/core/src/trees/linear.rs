//! Least-squares linear models for model-tree nodes.
//!
//! Columns are centered and scaled to unit norm before the normal equations
//! are formed, so the Gram matrix has a unit diagonal and the damping term is
//! a fixed fraction of its mean eigenvalue. Two rounds of iterative
//! refinement remove the damping bias on well-conditioned systems while
//! keeping rank-deficient ones finite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TabularProblem;

/// Diagonal damping relative to the (unit) mean diagonal of the scaled Gram
/// matrix.
const DAMPING: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    /// (feature index, coefficient), sorted by feature index.
    pub coefficients: Vec<(usize, f64)>,
}

impl LinearModel {
    pub fn constant(value: f64) -> Self {
        Self { intercept: value, coefficients: Vec::new() }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().fold(self.intercept, |acc, &(j, c)| acc + c * x[j])
    }

    /// Intercept plus retained coefficients.
    pub fn n_params(&self) -> usize {
        self.coefficients.len() + 1
    }

    pub fn describe(&self, names: &[String]) -> String {
        let mut s = format!("{:.6}", self.intercept);
        for &(j, c) in &self.coefficients {
            let name = names.get(j).map_or_else(|| format!("x{j}"), Clone::clone);
            s.push_str(&format!(" {} {:.6}*{}", if c < 0.0 { '-' } else { '+' }, c.abs(), name));
        }
        s
    }
}

/// M5's pessimistic correction for a model with `params` parameters fitted
/// to `n` rows. Infinite when the model has no residual degrees of freedom.
pub fn pruning_factor(n: usize, params: usize) -> f64 {
    if n > params {
        (n + params) as f64 / (n - params) as f64
    } else {
        f64::INFINITY
    }
}

/// Root-mean-square training error inflated by [`pruning_factor`].
pub fn adjusted_error(sse: f64, n: usize, params: usize) -> f64 {
    let factor = pruning_factor(n, params);
    if factor.is_infinite() {
        return f64::INFINITY;
    }
    (sse.max(0.0) / n as f64).sqrt() * factor
}

/// A fitted model together with its training squared error.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub model: LinearModel,
    pub sse: f64,
    /// Distinct training rows, the sample size used by [`adjusted_error`].
    pub n_eff: usize,
}

/// Centered, unit-norm sufficient statistics of one (rows, attributes)
/// regression problem.
struct Normalized {
    attrs: Vec<usize>,
    x_mean: Vec<f64>,
    scale: Vec<f64>,
    y_mean: f64,
    /// Scaled Gram matrix, row-major p×p.
    gram: Vec<f64>,
    /// Scaled cross products with the centered target.
    xty: Vec<f64>,
    yty: f64,
}

impl Normalized {
    fn new(problem: &TabularProblem, rows: &[usize], attrs: &[usize]) -> Self {
        let n = rows.len();
        let nf = n as f64;
        let y = problem.target();
        let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / nf;

        let mut usable = Vec::new();
        let mut x_mean = Vec::new();
        let mut scale = Vec::new();
        for &j in attrs {
            let m = rows.iter().map(|&i| problem.value(i, j)).sum::<f64>() / nf;
            let ss: f64 = rows.iter().map(|&i| (problem.value(i, j) - m).powi(2)).sum();
            if ss > 0.0 && ss.is_finite() {
                usable.push(j);
                x_mean.push(m);
                scale.push(ss.sqrt());
            }
        }

        let p = usable.len();
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        let mut z = vec![0.0; p];
        for &i in rows {
            let x = problem.row(i);
            for a in 0..p {
                z[a] = (x[usable[a]] - x_mean[a]) / scale[a];
            }
            let dy = y[i] - y_mean;
            yty += dy * dy;
            for a in 0..p {
                xty[a] += z[a] * dy;
                for b in a..p {
                    gram[a * p + b] += z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }
        Self { attrs: usable, x_mean, scale, y_mean, gram, xty, yty }
    }

    /// Solves the damped normal equations restricted to `subset` (indices
    /// into `self.attrs`) and returns (scaled coefficients, SSE).
    fn solve(&self, subset: &[usize]) -> (Vec<f64>, f64) {
        let p = self.attrs.len();
        let k = subset.len();
        if k == 0 {
            return (Vec::new(), self.yty.max(0.0));
        }
        let g: Vec<f64> = subset.iter().flat_map(|&a| subset.iter().map(move |&b| self.gram[a * p + b])).collect();
        let c: Vec<f64> = subset.iter().map(|&a| self.xty[a]).collect();

        let gram = DMatrix::from_row_slice(k, k, &g);
        let rhs = DVector::from_column_slice(&c);
        let damped = &gram + DMatrix::identity(k, k) * DAMPING;
        let chol = damped.cholesky().expect("damped Gram matrix is positive definite");
        let mut beta_v = chol.solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            beta_v += chol.solve(&(&rhs - &gram * &beta_v));
        }
        let beta: Vec<f64> = beta_v.iter().copied().collect();

        // SSE(β) = yᵀy − 2βᵀc + βᵀGβ
        let bc: f64 = beta.iter().zip(&c).map(|(b, c)| b * c).sum();
        let bgb: f64 = (0..k).map(|a| beta[a] * (0..k).map(|b| g[a * k + b] * beta[b]).sum::<f64>()).sum();
        (beta, (self.yty - 2.0 * bc + bgb).max(0.0))
    }

    fn model(&self, subset: &[usize], beta: &[f64]) -> LinearModel {
        let mut intercept = self.y_mean;
        let mut coefficients = Vec::with_capacity(subset.len());
        for (&a, &b) in subset.iter().zip(beta) {
            let c = b / self.scale[a];
            intercept -= c * self.x_mean[a];
            coefficients.push((self.attrs[a], c));
        }
        coefficients.sort_by_key(|&(j, _)| j);
        LinearModel { intercept, coefficients }
    }
}

/// Plain least squares over `attrs` (constant columns are skipped), without
/// attribute elimination.
pub fn least_squares(problem: &TabularProblem, rows: &[usize], attrs: &[usize]) -> LinearFit {
    assert!(!rows.is_empty(), "least squares needs at least one row");
    let stats = Normalized::new(problem, rows, attrs);
    let all: Vec<usize> = (0..stats.attrs.len()).collect();
    let (beta, sse) = stats.solve(&all);
    let n_eff = distinct_rows(problem, rows, &stats.attrs);
    LinearFit { model: stats.model(&all, &beta), sse, n_eff }
}

/// Least squares followed by greedy backward elimination: repeatedly drop
/// the attribute whose removal gives the lowest adjusted error, as long as
/// that error does not exceed the current one.
pub fn fit_linear(problem: &TabularProblem, rows: &[usize], attrs: &[usize]) -> LinearFit {
    assert!(!rows.is_empty(), "linear fit needs at least one row");
    let stats = Normalized::new(problem, rows, attrs);
    let n = distinct_rows(problem, rows, &stats.attrs);
    let mut current: Vec<usize> = (0..stats.attrs.len()).collect();
    let (mut beta, mut sse) = stats.solve(&current);
    let mut err = adjusted_error(sse, n, current.len() + 1);

    while !current.is_empty() {
        let mut best: Option<(usize, Vec<f64>, f64, f64)> = None;
        for drop in 0..current.len() {
            let trial: Vec<usize> = current.iter().enumerate().filter_map(|(i, &a)| (i != drop).then_some(a)).collect();
            let (b, s) = stats.solve(&trial);
            let e = adjusted_error(s, n, trial.len() + 1);
            if best.as_ref().is_none_or(|x| e < x.2) {
                best = Some((drop, b, e, s));
            }
        }
        let (drop, b, e, s) = best.expect("at least one candidate");
        if e <= err {
            current.remove(drop);
            beta = b;
            err = e;
            sse = s;
        } else {
            break;
        }
    }
    LinearFit { model: stats.model(&current, &beta), sse, n_eff: n }
}

/// Rows that differ in the target or in any of `attrs`. Bootstrap samples
/// repeat rows, and repeats carry no information about the coefficients.
fn distinct_rows(problem: &TabularProblem, rows: &[usize], attrs: &[usize]) -> usize {
    let y = problem.target();
    let mut keys: Vec<Vec<u64>> = rows
        .iter()
        .map(|&i| attrs.iter().map(|&j| problem.value(i, j).to_bits()).chain([y[i].to_bits()]).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_rows(p: &TabularProblem) -> Vec<usize> {
        (0..p.n_rows()).collect()
    }

    #[test]
    fn recovers_exact_line() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.7 - 2.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[0]).collect();
        let p = TabularProblem::from_rows(&rows, y).unwrap();
        let fit = fit_linear(&p, &all_rows(&p), &[0]);
        assert!((fit.model.intercept - 3.0).abs() < 1e-9, "{:?}", fit.model);
        assert_eq!(fit.model.coefficients.len(), 1);
        assert!((fit.model.coefficients[0].1 - 2.0).abs() < 1e-9);
        assert!(fit.sse < 1e-12);
    }

    #[test]
    fn constant_target_drops_everything() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let p = TabularProblem::from_rows(&rows, vec![7.0; 10]).unwrap();
        let fit = fit_linear(&p, &all_rows(&p), &[0, 1]);
        assert_eq!(fit.model, LinearModel::constant(7.0));
        assert_eq!(fit.sse, 0.0);
    }

    #[test]
    fn single_row_is_constant() {
        let p = TabularProblem::from_rows(&[vec![1.0, 2.0]], vec![4.0]).unwrap();
        let fit = fit_linear(&p, &[0], &[0, 1]);
        assert_eq!(fit.model, LinearModel::constant(4.0));
    }

    #[test]
    fn elimination_drops_useless_attribute() {
        // y depends on x0 only; x1 is an unrelated deterministic sequence.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 0.5 * r[0]).collect();
        let p = TabularProblem::from_rows(&rows, y).unwrap();
        let fit = fit_linear(&p, &all_rows(&p), &[0, 1]);
        assert_eq!(fit.model.coefficients.len(), 1);
        assert_eq!(fit.model.coefficients[0].0, 0);
    }

    #[test]
    fn repeated_rows_do_not_buy_parameters() {
        // Two distinct points, each twice: a slope would have no residual
        // degrees of freedom.
        let p = TabularProblem::from_rows(&[vec![1.0], vec![1.001]], vec![3.0, 5.0]).unwrap();
        let fit = fit_linear(&p, &[0, 0, 1, 1], &[0]);
        assert_eq!(fit.n_eff, 2);
        assert!(fit.model.coefficients.is_empty());
        assert!((fit.model.intercept - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_factor_guard() {
        assert_eq!(pruning_factor(10, 2), 1.5);
        assert!(pruning_factor(3, 3).is_infinite());
        assert!(adjusted_error(0.0, 2, 2).is_infinite());
        assert_eq!(adjusted_error(0.0, 5, 1), 0.0);
    }
}
