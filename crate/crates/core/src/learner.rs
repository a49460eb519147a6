//! The fit/predict contract shared by every regression method, and the
//! adapters that put the trees and kNN behind it.

use std::fmt::Debug;

use serde_json::{json, Value};
use thiserror::Error;

use crate::data::{DataError, TabularProblem};
use crate::knn::{KnnError, KnnModel};
use crate::trees::{m5p_fit, reptree_fit, M5Tree, RepTree, TreeError, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<LearnError>,
    },
    #[error("meta learner: {0}")]
    Meta(#[source] Box<LearnError>),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// A fitted regression model. Prediction is a pure read.
pub trait Model: Send + Sync + Debug {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError>;

    /// Human-readable rendering of the fitted model.
    fn dump(&self, feature_names: &[String]) -> String;
}

/// A regression method. `fit` must be a deterministic function of the
/// problem and the seed.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    /// Full hyperparameter record, echoed into reports.
    fn params(&self) -> Value;

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError>;
}

impl Model for M5Tree {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError> {
        Ok(M5Tree::predict(self, query)?)
    }

    fn dump(&self, names: &[String]) -> String {
        M5Tree::dump(self, names)
    }
}

impl Model for RepTree {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError> {
        Ok(RepTree::predict(self, query)?)
    }

    fn dump(&self, names: &[String]) -> String {
        RepTree::dump(self, names)
    }
}

impl Model for KnnModel<f64> {
    fn predict(&self, query: &[f64]) -> Result<f64, LearnError> {
        Ok(KnnModel::predict(self, query)?)
    }

    fn dump(&self, _names: &[String]) -> String {
        format!(
            "kNN regression: k={}, {} stored rows, L1 on range-scaled features, 1/d weights\n",
            self.k(),
            self.n_rows()
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct M5pLearner {
    pub params: TreeParams,
}

impl Learner for M5pLearner {
    fn name(&self) -> String {
        "M5P".into()
    }

    fn params(&self) -> Value {
        json!({
            "min_instances": self.params.min_instances,
            "sd_stop_fraction": self.params.sd_stop_fraction,
            "smoothing_k": self.params.smoothing_k,
            "prune": self.params.prune,
        })
    }

    fn fit(&self, problem: &TabularProblem, _seed: u64) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(m5p_fit(problem, &self.params)?))
    }
}

/// The seed passed to `fit` drives the grow/prune shuffle.
#[derive(Debug, Clone)]
pub struct RepTreeLearner {
    pub params: TreeParams,
}

impl Default for RepTreeLearner {
    fn default() -> Self {
        Self { params: TreeParams::reptree() }
    }
}

impl Learner for RepTreeLearner {
    fn name(&self) -> String {
        "REPTree".into()
    }

    fn params(&self) -> Value {
        json!({
            "min_instances": self.params.min_instances,
            "sd_stop_fraction": self.params.sd_stop_fraction,
            "prune": self.params.prune,
            "prune_fraction": self.params.prune_fraction,
        })
    }

    fn fit(&self, problem: &TabularProblem, seed: u64) -> Result<Box<dyn Model>, LearnError> {
        let params = TreeParams { seed, ..self.params.clone() };
        Ok(Box::new(reptree_fit(problem, &params)?))
    }
}

#[derive(Debug, Clone)]
pub struct KnnLearner {
    pub k: usize,
}

impl Learner for KnnLearner {
    fn name(&self) -> String {
        format!("kNN (k={})", self.k)
    }

    fn params(&self) -> Value {
        json!({ "k": self.k, "distance": "manhattan", "weighting": "inverse_distance", "normalize": true })
    }

    fn fit(&self, problem: &TabularProblem, _seed: u64) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(KnnModel::fit(problem, self.k)?))
    }
}

/// Predicts the training-target mean. A baseline and a handy test double.
#[derive(Debug, Clone, Default)]
pub struct MeanLearner;

#[derive(Debug, Clone)]
pub struct ConstantModel(pub f64);

impl Model for ConstantModel {
    fn predict(&self, _query: &[f64]) -> Result<f64, LearnError> {
        Ok(self.0)
    }

    fn dump(&self, _names: &[String]) -> String {
        format!("constant {}\n", self.0)
    }
}

impl Learner for MeanLearner {
    fn name(&self) -> String {
        "Mean".into()
    }

    fn params(&self) -> Value {
        json!({})
    }

    fn fit(&self, problem: &TabularProblem, _seed: u64) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(ConstantModel(crate::metrics::mean(problem.target()))))
    }
}
