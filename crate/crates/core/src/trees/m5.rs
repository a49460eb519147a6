//! M5 model tree: a standard-deviation-reduction regression tree whose
//! nodes carry least-squares linear models.
//!
//! After growth, models are fitted bottom-up. An interior node's model uses
//! the attributes tested anywhere in its subtree; a grown leaf's model uses
//! the attributes tested on its path from the root. With pruning on, a
//! subtree is replaced by its node model whenever the node model's adjusted
//! error is no worse than the subtree's. Predictions are smoothed along the
//! path back to the root.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::linear::{adjusted_error, fit_linear, LinearModel};
use super::{check_query, grow, GrowConfig, GrownNode, SplitCriterion, TreeError, TreeParams};
use crate::data::TabularProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum M5Node {
    Split { feature: usize, threshold: f64, left: Box<M5Node>, right: Box<M5Node>, model: LinearModel, n: usize },
    Leaf { model: LinearModel, n: usize },
}

impl M5Node {
    pub fn n(&self) -> usize {
        match self {
            Self::Split { n, .. } | Self::Leaf { n, .. } => *n,
        }
    }

    pub fn model(&self) -> &LinearModel {
        match self {
            Self::Split { model, .. } | Self::Leaf { model, .. } => model,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match self {
            Self::Leaf { model, .. } => model.predict(x),
            Self::Split { feature, threshold, left, right, .. } => {
                if x[*feature] <= *threshold {
                    left.raw(x)
                } else {
                    right.raw(x)
                }
            }
        }
    }

    fn smoothed(&self, x: &[f64], k: f64) -> f64 {
        match self {
            Self::Leaf { model, .. } => model.predict(x),
            Self::Split { feature, threshold, left, right, model, .. } => {
                let child = if x[*feature] <= *threshold { left } else { right };
                let p = child.smoothed(x, k);
                let n = child.n() as f64;
                (n * p + k * model.predict(x)) / (n + k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Tree {
    pub root: M5Node,
    pub smoothing_k: f64,
    pub n_features: usize,
}

impl M5Tree {
    pub fn predict(&self, query: &[f64]) -> Result<f64, TreeError> {
        check_query(query, self.n_features)?;
        Ok(if self.smoothing_k == 0.0 { self.root.raw(query) } else { self.root.smoothed(query, self.smoothing_k) })
    }

    /// The routed leaf's own model, ignoring smoothing.
    pub fn predict_unsmoothed(&self, query: &[f64]) -> Result<f64, TreeError> {
        check_query(query, self.n_features)?;
        Ok(self.root.raw(query))
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        dump_node(&self.root, names, 0, &mut out);
        out
    }
}

fn dump_node(node: &M5Node, names: &[String], depth: usize, out: &mut String) {
    let pad = "|   ".repeat(depth);
    match node {
        M5Node::Leaf { model, n } => {
            out.push_str(&format!("{pad}LM (n={n}): {}\n", model.describe(names)));
        }
        M5Node::Split { feature, threshold, left, right, n, .. } => {
            let name = names.get(*feature).map_or_else(|| format!("x{feature}"), Clone::clone);
            out.push_str(&format!("{pad}{name} <= {threshold} (n={n})\n"));
            dump_node(left, names, depth + 1, out);
            out.push_str(&format!("{pad}{name} > {threshold}\n"));
            dump_node(right, names, depth + 1, out);
        }
    }
}

pub fn m5p_fit(problem: &TabularProblem, params: &TreeParams) -> Result<M5Tree, TreeError> {
    params.validate()?;
    let n = problem.n_rows();
    if n < params.min_instances {
        return Err(TreeError::TooFewRows { need: params.min_instances, got: n });
    }
    let cfg = GrowConfig {
        criterion: SplitCriterion::StdDevReduction,
        min_instances: params.min_instances,
        sd_stop_fraction: params.sd_stop_fraction,
    };
    let all: Vec<usize> = (0..problem.n_features()).collect();
    let grown = grow(problem, (0..n).collect(), &cfg, &mut |_| all.clone());
    let mut path = Vec::new();
    let root = finalize(problem, grown, params.prune, &mut path).node;
    Ok(M5Tree { root, smoothing_k: params.smoothing_k, n_features: problem.n_features() })
}

struct Finalized {
    node: M5Node,
    /// Training SSE of the (unsmoothed) subtree on the node's rows.
    sse: f64,
    params: usize,
    tested_below: BTreeSet<usize>,
}

fn finalize(problem: &TabularProblem, grown: GrownNode, prune: bool, path: &mut Vec<usize>) -> Finalized {
    let GrownNode { rows, split } = grown;
    let n = rows.len();
    let Some((split, left, right)) = split else {
        let attrs: BTreeSet<usize> = path.iter().copied().collect();
        let attrs: Vec<usize> = attrs.into_iter().collect();
        let fit = fit_linear(problem, &rows, &attrs);
        return Finalized {
            params: fit.model.n_params(),
            node: M5Node::Leaf { model: fit.model, n },
            sse: fit.sse,
            tested_below: BTreeSet::new(),
        };
    };

    path.push(split.feature);
    let l = finalize(problem, *left, prune, path);
    let r = finalize(problem, *right, prune, path);
    path.pop();

    let mut tested_below: BTreeSet<usize> = l.tested_below.union(&r.tested_below).copied().collect();
    tested_below.insert(split.feature);
    let attrs: Vec<usize> = tested_below.iter().copied().collect();
    let fit = fit_linear(problem, &rows, &attrs);

    let subtree_sse = l.sse + r.sse;
    let subtree_params = l.params + r.params + 1;
    if prune {
        let model_err = adjusted_error(fit.sse, fit.n_eff, fit.model.n_params());
        let subtree_err = adjusted_error(subtree_sse, fit.n_eff, subtree_params);
        if model_err <= subtree_err {
            return Finalized {
                params: fit.model.n_params(),
                node: M5Node::Leaf { model: fit.model, n },
                sse: fit.sse,
                tested_below,
            };
        }
    }
    Finalized {
        node: M5Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(l.node),
            right: Box::new(r.node),
            model: fit.model,
            n,
        },
        sse: subtree_sse,
        params: subtree_params,
        tested_below,
    }
}
