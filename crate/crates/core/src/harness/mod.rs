//! Seeded cross-validation and the benchmark presets built on it.

mod report;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use report::{render_json, Render};

use crate::data::{
    discretize_severity, make_bags, propositionalize, severity_counts, whole_updrs_subset, DataError, Record,
    SeverityClass, TabularProblem,
};
use crate::ensembles::{BaggingLearner, EnsembleParams, RandomForestLearner, StackingLearner, VotingLearner};
use crate::folds::{derive_seed, make_folds, FoldError, FoldPlan};
use crate::knn::{KnnError, KnnModel};
use crate::learner::{KnnLearner, LearnError, Learner, M5pLearner, RepTreeLearner};
use crate::metrics::{classification_tally, mae, pearson, rank_features, FeatureRanking, MetricsError};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("fold {fold}: {source}")]
    Learn {
        fold: usize,
        #[source]
        source: LearnError,
    },
    #[error("fold {fold}: {source}")]
    Knn {
        fold: usize,
        #[source]
        source: KnnError,
    },
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

impl HarnessError {
    /// True for errors caused by run configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Fold(_) | Self::UnknownMethod(_) | Self::Learn { source: LearnError::InvalidParams(_), .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDetail {
    pub fold: usize,
    pub test_size: usize,
    /// `None` when the fold's predictions or targets are constant.
    pub r: Option<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset_tag: String,
    pub seed: u64,
    pub folds: usize,
    pub n: usize,
    pub pooled_r: Option<f64>,
    pub pooled_mae: f64,
    pub per_fold: Vec<FoldDetail>,
    pub params: Value,
    pub wall_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Held-out prediction for every row, in row order.
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

/// One row of a method table: an evaluated method or one that is listed
/// for completeness but not implemented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableRow {
    Evaluated(EvalReport),
    OutOfScope { method: String, status: String, reason: String },
}

impl TableRow {
    pub fn report(&self) -> Option<&EvalReport> {
        match self {
            Self::Evaluated(r) => Some(r),
            Self::OutOfScope { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTable {
    pub title: String,
    pub rows: Vec<TableRow>,
}

impl MethodTable {
    pub fn reports(&self) -> impl Iterator<Item = &EvalReport> {
        self.rows.iter().filter_map(TableRow::report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub method: String,
    pub dataset_tag: String,
    pub seed: u64,
    pub folds: usize,
    pub n: usize,
    pub class_distribution: BTreeMap<String, usize>,
    pub accuracy: f64,
    pub majority_class: String,
    pub majority_baseline: f64,
    /// Rows are actual classes, columns predicted, both in Mild, Moderate,
    /// Severe order.
    pub confusion: [[usize; 3]; 3],
    pub wall_time_s: Option<f64>,
}

/// Drops wall-clock fields so reports of identical runs compare equal.
pub trait StripTiming {
    fn strip_timing(&mut self);
}

impl StripTiming for EvalReport {
    fn strip_timing(&mut self) {
        self.wall_time_s = None;
    }
}

impl StripTiming for MethodTable {
    fn strip_timing(&mut self) {
        for row in &mut self.rows {
            if let TableRow::Evaluated(r) = row {
                r.strip_timing();
            }
        }
    }
}

impl StripTiming for ClassificationReport {
    fn strip_timing(&mut self) {
        self.wall_time_s = None;
    }
}

impl StripTiming for FeatureRanking {
    fn strip_timing(&mut self) {}
}

/// Evaluates `learner` under `fold_count`-fold CV. Fold `f` trains with
/// seed `derive_seed(seed, f)`. Folds run in parallel; predictions are
/// pooled in row order before any metric is computed.
pub fn cross_validate(
    problem: &TabularProblem,
    learner: &dyn Learner,
    fold_count: usize,
    seed: u64,
    dataset_tag: &str,
) -> Result<EvalReport, HarnessError> {
    let start = Instant::now();
    let plan = make_folds(problem.n_rows(), fold_count, seed)?;
    let fold_preds = (0..fold_count)
        .into_par_iter()
        .map(|fold| {
            let (train_rows, test_rows) = (plan.train_rows(fold), plan.test_rows(fold));
            assert_disjoint(&plan, &train_rows, fold);
            let err = |source| HarnessError::Learn { fold, source };
            let train = problem.subset(&train_rows)?;
            let model = learner.fit(&train, derive_seed(seed, fold as u64)).map_err(err)?;
            let preds =
                test_rows.iter().map(|&i| model.predict(problem.row(i))).collect::<Result<Vec<_>, _>>().map_err(err)?;
            Ok((test_rows, preds))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let mut predictions = vec![f64::NAN; problem.n_rows()];
    let mut per_fold = Vec::with_capacity(fold_count);
    for (fold, (rows, preds)) in fold_preds.into_iter().enumerate() {
        let actual: Vec<f64> = rows.iter().map(|&i| problem.target()[i]).collect();
        per_fold.push(FoldDetail {
            fold,
            test_size: rows.len(),
            r: optional_r(&preds, &actual)?,
            mae: mae(&preds, &actual)?,
        });
        for (i, p) in rows.into_iter().zip(preds) {
            predictions[i] = p;
        }
    }
    debug_assert!(predictions.iter().all(|p| !p.is_nan()));

    Ok(EvalReport {
        method: learner.name(),
        dataset_tag: dataset_tag.to_string(),
        seed,
        folds: fold_count,
        n: problem.n_rows(),
        pooled_r: optional_r(&predictions, problem.target())?,
        pooled_mae: mae(&predictions, problem.target())?,
        per_fold,
        params: learner.params(),
        wall_time_s: Some(start.elapsed().as_secs_f64()),
        note: None,
        predictions,
    })
}

fn optional_r(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricsError> {
    match pearson(x, y) {
        Ok(r) => Ok(Some(r)),
        Err(MetricsError::DegenerateInput | MetricsError::TooShort { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn assert_disjoint(plan: &FoldPlan, train_rows: &[usize], fold: usize) {
    assert!(
        train_rows.iter().all(|&i| plan.assignment[i] != fold),
        "fold {fold}: a held-out row is in the training set"
    );
}

pub const METHODS: [&str; 7] = ["m5p", "reptree", "knn", "bag-m5p", "stack", "vote", "forest"];

/// The learner behind a `--method` name.
pub fn method_preset(name: &str) -> Result<Arc<dyn Learner>, HarnessError> {
    let m5p: Arc<dyn Learner> = Arc::new(M5pLearner::default());
    let reptree: Arc<dyn Learner> = Arc::new(RepTreeLearner::default());
    Ok(match name {
        "m5p" => m5p,
        "reptree" => reptree,
        "knn" => Arc::new(KnnLearner { k: 7 }),
        "bag-m5p" => Arc::new(BaggingLearner { base: m5p, params: EnsembleParams::bagging() }),
        "stack" => Arc::new(StackingLearner {
            bases: vec![m5p.clone(), reptree],
            meta: m5p,
            params: EnsembleParams::stacking(),
        }),
        "vote" => Arc::new(VotingLearner { bases: vec![m5p, reptree] }),
        "forest" => Arc::new(RandomForestLearner { params: EnsembleParams::forest() }),
        other => return Err(HarnessError::UnknownMethod(other.to_string())),
    })
}

pub fn run_table2(problem: &TabularProblem) -> Result<FeatureRanking, HarnessError> {
    Ok(rank_features(problem)?)
}

fn run_methods(
    problem: &TabularProblem,
    methods: &[&str],
    folds: usize,
    seed: u64,
) -> Result<Vec<TableRow>, HarnessError> {
    methods
        .iter()
        .map(|m| Ok(TableRow::Evaluated(cross_validate(problem, method_preset(m)?.as_ref(), folds, seed, "full")?)))
        .collect()
}

pub fn run_table3(problem: &TabularProblem, folds: usize, seed: u64) -> Result<MethodTable, HarnessError> {
    let mut rows = run_methods(problem, &["m5p", "reptree", "knn"], folds, seed)?;
    rows.push(TableRow::OutOfScope {
        method: "SVM".into(),
        status: "out_of_scope".into(),
        reason: "support vector regression is not implemented".into(),
    });
    Ok(MethodTable { title: "Regression methods".into(), rows })
}

pub fn run_table4(problem: &TabularProblem, folds: usize, seed: u64) -> Result<MethodTable, HarnessError> {
    let rows = run_methods(problem, &["bag-m5p", "stack", "vote", "forest"], folds, seed)?;
    Ok(MethodTable { title: "Ensemble regression methods".into(), rows })
}

/// M5P on the rows whose motor score is a whole number.
pub fn run_verification(problem: &TabularProblem, folds: usize, seed: u64) -> Result<EvalReport, HarnessError> {
    let subset = whole_updrs_subset(problem)?;
    let mut report = cross_validate(&subset, &M5pLearner::default(), folds, seed, "whole-updrs-subset")?;
    report.note = Some(format!("{} of {} rows have a whole-number motor score", subset.n_rows(), problem.n_rows()));
    Ok(report)
}

/// Severity classification with a 6-nearest-neighbour vote under CV.
pub fn run_classification(
    problem: &TabularProblem,
    folds: usize,
    seed: u64,
) -> Result<ClassificationReport, HarnessError> {
    const K: usize = 6;
    let start = Instant::now();
    let labels = problem.target().iter().map(|&t| discretize_severity(t)).collect::<Result<Vec<_>, _>>()?;
    let plan = make_folds(problem.n_rows(), folds, seed)?;
    let fold_preds = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let (train_rows, test_rows) = (plan.train_rows(fold), plan.test_rows(fold));
            assert_disjoint(&plan, &train_rows, fold);
            let err = |source| HarnessError::Knn { fold, source };
            let train = problem.subset(&train_rows)?;
            let train_labels: Vec<SeverityClass> = train_rows.iter().map(|&i| labels[i]).collect();
            let model = KnnModel::fit_labels(&train, train_labels, K).map_err(err)?;
            let preds = test_rows
                .iter()
                .map(|&i| model.predict_class(problem.row(i)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            Ok((test_rows, preds))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut predicted = vec![SeverityClass::Mild; problem.n_rows()];
    for (rows, preds) in fold_preds {
        for (i, p) in rows.into_iter().zip(preds) {
            predicted[i] = p;
        }
    }
    let tally = classification_tally(&predicted, &labels)?;
    let counts = severity_counts(problem)?;
    // `max_by_key` keeps the last maximum, so ties go to the more severe class.
    let (&majority, &majority_count) = counts.iter().max_by_key(|(_, &c)| c).expect("three classes");
    Ok(ClassificationReport {
        method: format!("kNN classifier (k={K})"),
        dataset_tag: "severity-classes".into(),
        seed,
        folds,
        n: problem.n_rows(),
        class_distribution: counts.iter().map(|(c, &n)| (c.to_string(), n)).collect(),
        accuracy: tally.accuracy,
        majority_class: majority.to_string(),
        majority_baseline: majority_count as f64 / problem.n_rows() as f64,
        confusion: tally.confusion,
        wall_time_s: Some(start.elapsed().as_secs_f64()),
    })
}

/// M5P regression on bags of same-day recordings, each reduced to its
/// per-feature means.
pub fn run_mil(records: &[Record], folds: usize, seed: u64) -> Result<EvalReport, HarnessError> {
    let bags = make_bags(records)?;
    let problem = propositionalize(&bags)?;
    let mut report = cross_validate(&problem, &M5pLearner::default(), folds, seed, "mil-propositionalized")?;
    report.note = Some(format!(
        "{} bags (subject, day) with mean-aggregated features; evaluated as regression on the bag mean score",
        bags.len()
    ));
    report.params = json!({ "learner": report.params, "aggregation": "mean" });
    Ok(report)
}
