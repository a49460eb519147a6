//! Regression benchmarking for voice-based Parkinson's telemonitoring data.
//!
//! The crate covers dataset loading and transforms ([`data`]), correlation
//! and error metrics ([`metrics`]), distance-weighted kNN ([`knn`]), M5 model
//! trees and reduced-error-pruned regression trees ([`trees`]), ensemble
//! combinators ([`ensembles`]) and seeded cross-validation with the report
//! presets built on top of them ([`harness`]).

pub mod data;
pub mod ensembles;
pub mod folds;
pub mod harness;
pub mod knn;
pub mod learner;
pub mod metrics;
pub mod trees;

pub use data::{load_csv, Record, TabularProblem};
pub use learner::{LearnError, Learner, Model};
