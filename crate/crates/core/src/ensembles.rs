//! Bagging, stacking, voting and random forests over any [`Learner`].
//!
//! Every member gets its own RNG stream derived from (seed, member index),
//! members may train in parallel, and predictions are combined in member
//! order. Results therefore do not depend on thread scheduling.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{RowKey, TabularProblem};
use crate::folds::{derive_seed, make_folds};
use crate::learner::{LearnError, Learner, Model};
use crate::trees::{grow_unpruned, RepTree, TreeParams};

/// How each bagging/forest member draws its training rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// `bag_percent`·N/100 rows drawn with replacement.
    Bootstrap,
    /// Every row exactly once, in order. Meant for degenerate-configuration
    /// checks.
    FullData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub iterations: usize,
    pub bag_percent: f64,
    /// Forest only; `None` means floor(log2 F) + 1.
    pub features_per_split: Option<usize>,
    pub meta_folds: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Growth settings of forest trees.
    pub forest_tree: TreeParams,
}

impl EnsembleParams {
    pub fn bagging() -> Self {
        Self {
            iterations: 10,
            bag_percent: 100.0,
            features_per_split: None,
            meta_folds: 10,
            seed: 1,
            sampling: Sampling::Bootstrap,
            forest_tree: TreeParams {
                min_instances: 1,
                // Variance below 0.1% of the root's stops growth.
                sd_stop_fraction: 0.001f64.sqrt(),
                prune: false,
                ..TreeParams::reptree()
            },
        }
    }

    pub fn forest() -> Self {
        Self { iterations: 100, ..Self::bagging() }
    }

    pub fn stacking() -> Self {
        Self::bagging()
    }

    pub fn features_per_split_for(&self, n_features: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| (n_features as f64).log2().floor() as usize + 1).clamp(1, n_features)
    }

    fn validate(&self, n_features: usize) -> Result<(), LearnError> {
        if self.iterations < 1 {
            return Err(LearnError::InvalidParams("iterations must be >= 1".into()));
        }
        if !(self.bag_percent > 0.0 && self.bag_percent <= 100.0) {
            return Err(LearnError::InvalidParams("bag_percent must be in (0, 100]".into()));
        }
        if let Some(m) = self.features_per_split {
            if m < 1 || m > n_features {
                return Err(LearnError::InvalidParams(format!("features_per_split {m} outside [1, {n_features}]")));
            }
        }
        Ok(())
    }

    fn echo(&self) -> Value {
        json!({
            "iterations": self.iterations,
            "bag_percent": self.bag_percent,
            "features_per_split": self.features_per_split,
            "meta_folds": self.meta_folds,
            "sampling": self.sampling,
        })
    }
}

fn member_rows(n: usize, params: &EnsembleParams, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match params.sampling {
        Sampling::FullData => (0..n).collect(),
        Sampling::Bootstrap => {
            let size = ((params.bag_percent / 100.0 * n as f64).round() as usize).max(1);
            (0..size).map(|_| rng.gen_range(0..n)).collect()
        }
    }
}

fn mean_prediction(members: &[Box<dyn Model>], query: &[f64]) -> Result<f64, LearnError> {
    let mut sum = 0.0;
    for (index, m) in members.iter().enumerate() {
        sum += m.predict(query).map_err(|e| LearnError::Member { index, source: Box::new(e) })?;
    }
    Ok(sum / members.len() as f64)
}

fn dump_members(title: &str, members: &[Box<dyn Model>], names: &[String]) -> String {
    let mut out = format!("{title} ({} members)\n", members.len());
    for (i, m) in members.iter().enumerate() {
        out.push_str(&format!("--- member {i}\n"));
        out.push_str(&m.dump(names));
    }
    out
}

/// Unweighted average of member predictions.
#[derive(Debug)]
pub struct AveragingModel {
    kind: &'static str,
    pub members: Vec<Box<dyn Model>>,
}

impl Model for AveragingModel {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError> {
        mean_prediction(&self.members, query)
    }

    fn dump(&self, names: &[String]) -> String {
        dump_members(self.kind, &self.members, names)
    }
}

pub fn bagging_fit(
    base: &dyn Learner,
    problem: &TabularProblem,
    params: &EnsembleParams,
) -> Result<AveragingModel, LearnError> {
    params.validate(problem.n_features())?;
    let members = (0..params.iterations)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(params.seed, i as u64);
            let rows = member_rows(problem.n_rows(), params, &mut ChaCha8Rng::seed_from_u64(seed));
            problem
                .subset(&rows)
                .map_err(LearnError::from)
                .and_then(|sample| base.fit(&sample, seed))
                .map_err(|e| LearnError::Member { index: i, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AveragingModel { kind: "Bagging", members })
}

pub fn voting_fit(
    bases: &[Arc<dyn Learner>],
    problem: &TabularProblem,
    seed: u64,
) -> Result<AveragingModel, LearnError> {
    if bases.is_empty() {
        return Err(LearnError::InvalidParams("voting needs at least one base learner".into()));
    }
    let members = bases
        .par_iter()
        .enumerate()
        .map(|(index, b)| b.fit(problem, seed).map_err(|e| LearnError::Member { index, source: Box::new(e) }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AveragingModel { kind: "Vote", members })
}

/// Random forest: bootstrap-sampled, unpruned variance-reduction trees, each
/// node choosing among a fresh random subset of features.
pub fn random_forest_fit(problem: &TabularProblem, params: &EnsembleParams) -> Result<AveragingModel, LearnError> {
    params.validate(problem.n_features())?;
    let f = problem.n_features();
    let m = params.features_per_split_for(f);
    let members = (0..params.iterations)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(params.seed, t as u64);
            let rows = member_rows(problem.n_rows(), params, &mut ChaCha8Rng::seed_from_u64(tree_seed));
            let mut features_for = |node: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tree_seed, node));
                let mut picked = sample(&mut rng, f, m).into_vec();
                picked.sort_unstable();
                picked
            };
            grow_unpruned(problem, rows, &params.forest_tree, &mut features_for)
                .map(|tree| Box::new(tree) as Box<dyn Model>)
                .map_err(|e| LearnError::Member { index: t, source: Box::new(e.into()) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AveragingModel { kind: "RandomForest", members })
}

/// Base models refit on all data feeding a meta model trained on
/// out-of-fold base predictions.
#[derive(Debug)]
pub struct StackingModel {
    pub bases: Vec<Box<dyn Model>>,
    pub meta: Box<dyn Model>,
    /// Out-of-fold base predictions, N × (number of bases).
    pub meta_features: TabularProblem,
    /// Internal fold of each row; row i's meta-features come from models
    /// trained on rows of other folds only.
    pub meta_fold_of_row: Vec<usize>,
}

impl Model for StackingModel {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError> {
        let level1 = self
            .bases
            .iter()
            .enumerate()
            .map(|(index, b)| b.predict(query).map_err(|e| LearnError::Member { index, source: Box::new(e) }))
            .collect::<Result<Vec<_>, _>>()?;
        self.meta.predict(&level1).map_err(|e| LearnError::Meta(Box::new(e)))
    }

    fn dump(&self, names: &[String]) -> String {
        let mut out = dump_members("Stacking bases", &self.bases, names);
        out.push_str("--- meta\n");
        out.push_str(&self.meta.dump(self.meta_features.feature_names()));
        out
    }
}

pub fn stacking_fit(
    bases: &[Arc<dyn Learner>],
    meta: &dyn Learner,
    problem: &TabularProblem,
    params: &EnsembleParams,
) -> Result<StackingModel, LearnError> {
    if bases.is_empty() {
        return Err(LearnError::InvalidParams("stacking needs at least one base learner".into()));
    }
    let n = problem.n_rows();
    let plan = make_folds(n, params.meta_folds, params.seed).map_err(|e| LearnError::InvalidParams(e.to_string()))?;

    // (fold, base) jobs; each fills the meta-feature column of its fold's rows.
    let jobs: Vec<(usize, usize)> = (0..plan.fold_count).flat_map(|f| (0..bases.len()).map(move |b| (f, b))).collect();
    let columns = jobs
        .par_iter()
        .map(|&(fold, b)| {
            let train = problem.subset(&plan.train_rows(fold))?;
            let model = bases[b].fit(&train, params.seed)?;
            plan.test_rows(fold)
                .into_iter()
                .map(|i| model.predict(problem.row(i)).map(|p| (i, p)))
                .collect::<Result<Vec<_>, _>>()
        })
        .map(|r| r.map_err(|e: LearnError| e))
        .collect::<Vec<_>>();
    let mut level1 = vec![0.0; n * bases.len()];
    for (&(_, b), col) in jobs.iter().zip(columns) {
        let col = col.map_err(|e| LearnError::Member { index: b, source: Box::new(e) })?;
        for (i, p) in col {
            level1[i * bases.len() + b] = p;
        }
    }

    let names: Vec<String> = bases.iter().enumerate().map(|(i, b)| format!("{}#{i}", b.name())).collect();
    let keys: Vec<RowKey> = problem.row_keys().to_vec();
    let meta_features = TabularProblem::new(level1, problem.target().to_vec(), names, keys)?;
    let meta_model = meta.fit(&meta_features, params.seed).map_err(|e| LearnError::Meta(Box::new(e)))?;

    let fitted = bases
        .par_iter()
        .enumerate()
        .map(|(index, b)| b.fit(problem, params.seed).map_err(|e| LearnError::Member { index, source: Box::new(e) }))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(StackingModel { bases: fitted, meta: meta_model, meta_features, meta_fold_of_row: plan.assignment })
}

pub struct BaggingLearner {
    pub base: Arc<dyn Learner>,
    pub params: EnsembleParams,
}

impl Learner for BaggingLearner {
    fn name(&self) -> String {
        format!("Bagging {}", self.base.name())
    }

    fn params(&self) -> Value {
        json!({ "ensemble": self.params.echo(), "base": { "name": self.base.name(), "params": self.base.params() } })
    }

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError> {
        let params = EnsembleParams { seed, ..self.params.clone() };
        Ok(Box::new(bagging_fit(self.base.as_ref(), problem, &params)?))
    }
}

pub struct VotingLearner {
    pub bases: Vec<Arc<dyn Learner>>,
}

impl Learner for VotingLearner {
    fn name(&self) -> String {
        format!("Vote {}", self.bases.iter().map(|b| b.name()).collect::<Vec<_>>().join(" + "))
    }

    fn params(&self) -> Value {
        json!({ "bases": self.bases.iter().map(|b| json!({ "name": b.name(), "params": b.params() })).collect::<Vec<_>>() })
    }

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(voting_fit(&self.bases, problem, seed)?))
    }
}

pub struct StackingLearner {
    pub bases: Vec<Arc<dyn Learner>>,
    pub meta: Arc<dyn Learner>,
    pub params: EnsembleParams,
}

impl Learner for StackingLearner {
    fn name(&self) -> String {
        format!(
            "Stacking {} by {}",
            self.bases.iter().map(|b| b.name()).collect::<Vec<_>>().join(" + "),
            self.meta.name()
        )
    }

    fn params(&self) -> Value {
        json!({
            "meta_folds": self.params.meta_folds,
            "bases": self.bases.iter().map(|b| json!({ "name": b.name(), "params": b.params() })).collect::<Vec<_>>(),
            "meta": { "name": self.meta.name(), "params": self.meta.params() },
        })
    }

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError> {
        let params = EnsembleParams { seed, ..self.params.clone() };
        Ok(Box::new(stacking_fit(&self.bases, self.meta.as_ref(), problem, &params)?))
    }
}

pub struct RandomForestLearner {
    pub params: EnsembleParams,
}

impl Learner for RandomForestLearner {
    fn name(&self) -> String {
        "Random Forest".into()
    }

    fn params(&self) -> Value {
        json!({
            "ensemble": self.params.echo(),
            "tree": {
                "min_instances": self.params.forest_tree.min_instances,
                "sd_stop_fraction": self.params.forest_tree.sd_stop_fraction,
            },
        })
    }

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError> {
        let params = EnsembleParams { seed, ..self.params.clone() };
        Ok(Box::new(random_forest_fit(problem, &params)?))
    }
}

/// One unpruned forest-style tree on all rows and all features; the
/// reference a degenerate forest must reproduce.
pub fn single_variance_tree(problem: &TabularProblem, tree: &TreeParams) -> Result<RepTree, LearnError> {
    let all: Vec<usize> = (0..problem.n_features()).collect();
    Ok(grow_unpruned(problem, (0..problem.n_rows()).collect(), tree, &mut |_| all.clone())?)
}
