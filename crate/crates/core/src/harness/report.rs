use std::fmt::Write;

use serde::Serialize;

use super::{ClassificationReport, EvalReport, MethodTable, TableRow};
use crate::data::SeverityClass;
use crate::metrics::FeatureRanking;

/// Markdown rendering of a report.
pub trait Render {
    fn markdown(&self) -> String;
}

/// Pretty-printed JSON with a trailing newline.
pub fn render_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.digits$}"))
}

fn time(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |t| format!("{t:.2}"))
}

impl Render for FeatureRanking {
    fn markdown(&self) -> String {
        let mut out = String::from("| Rank | Correlation | Feature |\n|---:|---:|:---|\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "| {} | {} | {} |", i + 1, opt(e.correlation, 4), e.feature);
        }
        out
    }
}

fn header(out: &mut String) {
    out.push_str("| Method | Correlation coefficient | Mean absolute error | Folds | Seed | Time (s) |\n");
    out.push_str("|:---|---:|---:|---:|---:|---:|\n");
}

fn row(out: &mut String, r: &EvalReport) {
    let _ = writeln!(
        out,
        "| {} | {} | {:.4} | {} | {} | {} |",
        r.method,
        opt(r.pooled_r, 4),
        r.pooled_mae,
        r.folds,
        r.seed,
        time(r.wall_time_s)
    );
}

impl Render for EvalReport {
    fn markdown(&self) -> String {
        let mut out = format!("Dataset: {} ({} rows)\n\n", self.dataset_tag, self.n);
        header(&mut out);
        row(&mut out, self);
        if let Some(note) = &self.note {
            let _ = write!(out, "\nNote: {note}\n");
        }
        out.push_str("\n| Fold | Test size | r | MAE |\n|---:|---:|---:|---:|\n");
        for f in &self.per_fold {
            let _ = writeln!(out, "| {} | {} | {} | {:.4} |", f.fold, f.test_size, opt(f.r, 4), f.mae);
        }
        out
    }
}

impl Render for MethodTable {
    fn markdown(&self) -> String {
        let mut out = format!("## {}\n\n", self.title);
        header(&mut out);
        for r in &self.rows {
            match r {
                TableRow::Evaluated(r) => row(&mut out, r),
                TableRow::OutOfScope { method, .. } => {
                    let _ = writeln!(out, "| {method} | out of scope | out of scope | - | - | - |");
                }
            }
        }
        for r in &self.rows {
            if let TableRow::OutOfScope { method, reason, .. } = r {
                let _ = write!(out, "\n{method}: {reason}\n");
            }
        }
        out
    }
}

impl Render for ClassificationReport {
    fn markdown(&self) -> String {
        let mut out = format!("{} on {} rows, {}-fold CV, seed {}\n\n", self.method, self.n, self.folds, self.seed);
        let dist: Vec<String> = self.class_distribution.iter().map(|(c, n)| format!("{c}: {n}")).collect();
        let _ = writeln!(out, "Class distribution: {{{}}}", dist.join(", "));
        let _ = writeln!(out, "Accuracy: {:.4}", self.accuracy);
        let _ = writeln!(out, "Majority baseline ({}): {:.4}", self.majority_class, self.majority_baseline);
        out.push_str("\n| Actual \\ Predicted | Mild | Moderate | Severe |\n|:---|---:|---:|---:|\n");
        for c in SeverityClass::ALL {
            let cells = self.confusion[c.index()];
            let _ = writeln!(out, "| {c} | {} | {} | {} |", cells[0], cells[1], cells[2]);
        }
        out
    }
}
