//! Variance-reduction regression tree with reduced-error pruning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_query, grow, GrowConfig, GrownNode, SplitCriterion, TreeError, TreeParams};
use crate::data::TabularProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RepNode {
    Split { feature: usize, threshold: f64, left: Box<RepNode>, right: Box<RepNode>, mean: f64, n: usize },
    Leaf { mean: f64, n: usize },
}

impl RepNode {
    pub fn n(&self) -> usize {
        match self {
            Self::Split { n, .. } | Self::Leaf { n, .. } => *n,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Split { mean, .. } | Self::Leaf { mean, .. } => *mean,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Split { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    fn route(&self, x: &[f64]) -> f64 {
        match self {
            Self::Leaf { mean, .. } => *mean,
            Self::Split { feature, threshold, left, right, .. } => {
                if x[*feature] <= *threshold {
                    left.route(x)
                } else {
                    right.route(x)
                }
            }
        }
    }
}

/// Prune-set bookkeeping of one reduced-error pruning pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub grow_rows: usize,
    pub prune_rows: usize,
    pub sse_before: f64,
    pub sse_after: f64,
    pub nodes_before: usize,
    pub nodes_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepTree {
    pub root: RepNode,
    pub n_features: usize,
    pub prune_report: Option<PruneReport>,
}

impl RepTree {
    pub fn predict(&self, query: &[f64]) -> Result<f64, TreeError> {
        check_query(query, self.n_features)?;
        Ok(self.root.route(query))
    }

    pub fn n_nodes(&self) -> usize {
        self.root.n_nodes()
    }

    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        dump_node(&self.root, names, 0, &mut out);
        out
    }
}

fn dump_node(node: &RepNode, names: &[String], depth: usize, out: &mut String) {
    let pad = "|   ".repeat(depth);
    match node {
        RepNode::Leaf { mean, n } => out.push_str(&format!("{pad}: {mean:.6} (n={n})\n")),
        RepNode::Split { feature, threshold, left, right, .. } => {
            let name = names.get(*feature).map_or_else(|| format!("x{feature}"), Clone::clone);
            out.push_str(&format!("{pad}{name} <= {threshold}\n"));
            dump_node(left, names, depth + 1, out);
            out.push_str(&format!("{pad}{name} > {threshold}\n"));
            dump_node(right, names, depth + 1, out);
        }
    }
}

pub fn reptree_fit(problem: &TabularProblem, params: &TreeParams) -> Result<RepTree, TreeError> {
    params.validate()?;
    let n = problem.n_rows();
    let cfg = GrowConfig {
        criterion: SplitCriterion::VarianceReduction,
        min_instances: params.min_instances,
        sd_stop_fraction: params.sd_stop_fraction,
    };
    let all: Vec<usize> = (0..problem.n_features()).collect();

    if !params.prune {
        if n < 1 {
            return Err(TreeError::TooFewRows { need: 1, got: n });
        }
        let grown = grow(problem, (0..n).collect(), &cfg, &mut |_| all.clone());
        return Ok(RepTree { root: build(problem, grown), n_features: problem.n_features(), prune_report: None });
    }

    let need = 2 * params.min_instances;
    if n < need {
        return Err(TreeError::TooFewRows { need, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let n_prune = ((n as f64 * params.prune_fraction).round() as usize).clamp(1, n - 1);
    let prune_rows = order.split_off(n - n_prune);
    let mut grow_rows = order;
    grow_rows.sort_unstable();

    let grown = grow(problem, grow_rows.clone(), &cfg, &mut |_| all.clone());
    let unpruned = build(problem, grown);
    let nodes_before = unpruned.n_nodes();
    let sse_before = prune_set_sse(&unpruned, problem, &prune_rows);
    let (root, sse_after) = reduce(unpruned, problem, &prune_rows);
    debug_assert!(sse_after <= sse_before + 1e-9 * (1.0 + sse_before));

    Ok(RepTree {
        prune_report: Some(PruneReport {
            grow_rows: grow_rows.len(),
            prune_rows: prune_rows.len(),
            sse_before,
            sse_after,
            nodes_before,
            nodes_after: root.n_nodes(),
        }),
        root,
        n_features: problem.n_features(),
    })
}

/// Grows an unpruned variance-reduction tree on `rows` (duplicates allowed),
/// asking `features_for(node_id)` which features each node may split on.
pub fn grow_unpruned(
    problem: &TabularProblem,
    rows: Vec<usize>,
    params: &TreeParams,
    features_for: &mut dyn FnMut(u64) -> Vec<usize>,
) -> Result<RepTree, TreeError> {
    params.validate()?;
    if rows.is_empty() {
        return Err(TreeError::TooFewRows { need: 1, got: 0 });
    }
    let cfg = GrowConfig {
        criterion: SplitCriterion::VarianceReduction,
        min_instances: params.min_instances,
        sd_stop_fraction: params.sd_stop_fraction,
    };
    let grown = grow(problem, rows, &cfg, features_for);
    Ok(RepTree { root: build(problem, grown), n_features: problem.n_features(), prune_report: None })
}

fn build(problem: &TabularProblem, grown: GrownNode) -> RepNode {
    let y = problem.target();
    let n = grown.rows.len();
    let mean = grown.rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    match grown.split {
        None => RepNode::Leaf { mean, n },
        Some((split, left, right)) => RepNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(build(problem, *left)),
            right: Box::new(build(problem, *right)),
            mean,
            n,
        },
    }
}

fn prune_set_sse(node: &RepNode, problem: &TabularProblem, rows: &[usize]) -> f64 {
    rows.iter().map(|&i| (node.route(problem.row(i)) - problem.target()[i]).powi(2)).sum()
}

/// Bottom-up reduced-error pruning; returns the node and its prune-set SSE.
fn reduce(node: RepNode, problem: &TabularProblem, rows: &[usize]) -> (RepNode, f64) {
    let y = problem.target();
    match node {
        RepNode::Leaf { mean, .. } => {
            let sse = rows.iter().map(|&i| (mean - y[i]).powi(2)).sum();
            (node, sse)
        }
        RepNode::Split { feature, threshold, left, right, mean, n } => {
            let (lr, rr): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| problem.value(i, feature) <= threshold);
            let (left, l_sse) = reduce(*left, problem, &lr);
            let (right, r_sse) = reduce(*right, problem, &rr);
            let subtree_sse = l_sse + r_sse;
            let leaf_sse: f64 = rows.iter().map(|&i| (mean - y[i]).powi(2)).sum();
            if leaf_sse <= subtree_sse {
                (RepNode::Leaf { mean, n }, leaf_sse)
            } else {
                let node = RepNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right), mean, n };
                (node, subtree_sse)
            }
        }
    }
}
