//! Acceptance criteria P1-P13, one printed line each.
//!
//! P1-P11 need the public telemonitoring CSV (5,875 rows). It is read from
//! `$UPDRS_DATA`, or from `data/parkinsons_updrs.data` at the workspace
//! root. Without it those criteria print `NOT RUN` and do not fail the test
//! unless `UPDRS_REQUIRE_DATA=1`. P12 falls back to a synthetic file; P13
//! needs no data.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use updrs_core::data::{
    load_csv, make_bags, propositionalize, select_features, severity_counts, Record, SeverityClass, TabularProblem,
};
use updrs_core::ensembles::{bagging_fit, random_forest_fit, single_variance_tree, EnsembleParams, Sampling};
use updrs_core::folds::derive_seed;
use updrs_core::harness::{cross_validate, method_preset, run_table2, run_verification, EvalReport};
use updrs_core::knn::KnnModel;
use updrs_core::learner::{Learner, M5pLearner, Model, RepTreeLearner};
use updrs_core::metrics::pearson;
use updrs_core::trees::{
    best_split, feature_splits, fit_linear, least_squares, reptree_fit, SplitCriterion, TreeParams,
};

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Outcome {
    id: &'static str,
    status: Status,
    detail: String,
}

fn check(id: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome { id, status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn data_path() -> Option<PathBuf> {
    let path = std::env::var_os("UPDRS_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/parkinsons_updrs.data"));
    path.is_file().then_some(path)
}

/// Paper values keyed by this crate's feature names.
const TABLE2: [(&str, f64); 18] = [
    ("age", 0.2737),
    ("PPE", 0.1624),
    ("Shimmer:APQ11", 0.1366),
    ("RPDE", 0.1286),
    ("Shimmer(dB)", 0.1101),
    ("Shimmer", 0.1023),
    ("Shimmer:APQ5", 0.0921),
    ("Jitter(%)", 0.0848),
    ("Shimmer:APQ3", 0.0843),
    ("Shimmer:DDA", 0.0843),
    ("Jitter:PPQ5", 0.0763),
    ("NHR", 0.075),
    ("Jitter:DDP", 0.0727),
    ("Jitter:RAP", 0.0727),
    ("Jitter(Abs)", 0.0509),
    ("sex", 0.0312),
    ("DFA", -0.1162),
    ("HNR", -0.157),
];

fn summary(r: &EvalReport) -> String {
    format!(
        "r={} mae={:.4} ({:.1}s)",
        r.pooled_r.map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        r.pooled_mae,
        r.wall_time_s.unwrap_or(0.0)
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn cv(problem: &TabularProblem, method: &str) -> EvalReport {
    cross_validate(problem, method_preset(method).unwrap().as_ref(), 10, 1, "full").unwrap()
}

fn within(r: &EvalReport, min_r: f64, max_mae: f64) -> bool {
    r.pooled_r.is_some_and(|v| v >= min_r) && r.pooled_mae <= max_mae
}

fn data_criteria(path: &PathBuf) -> Vec<Outcome> {
    let mut out = Vec::new();

    // Independent raw-text reading for the counts.
    let text = std::fs::read_to_string(path).unwrap();
    let raw_rows: Vec<Vec<&str>> =
        text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(|l| l.split(',').collect()).collect();

    let (records, elapsed) = timed(|| load_csv(path));
    let records: Vec<Record> = records.unwrap();
    let subjects: BTreeSet<u32> = records.iter().map(|r| r.subject_id).collect();
    let raw_subjects: BTreeSet<&str> = raw_rows.iter().map(|r| r[0].trim()).collect();
    out.push(check(
        "P1",
        records.len() == 5875
            && subjects.len() == 42
            && raw_rows.len() == 5875
            && raw_subjects.len() == 42
            && elapsed < Duration::from_secs(1),
        format!("{} records, {} subjects, loaded in {:.3}s", records.len(), subjects.len(), elapsed.as_secs_f64()),
    ));

    let problem = select_features(&records).unwrap();
    let (ranking, elapsed) = timed(|| run_table2(&problem).unwrap());
    let got: BTreeMap<&str, f64> =
        ranking.entries.iter().map(|e| (e.feature.as_str(), e.correlation.unwrap_or(f64::NAN))).collect();
    let worst =
        TABLE2.iter().map(|(name, want)| (name, (got[name] - want).abs())).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    out.push(check(
        "P2",
        ranking.entries.len() == 18 && worst.1 <= 0.005 && elapsed < Duration::from_secs(1),
        format!("max |r - paper| = {:.4} ({}), {:.3}s", worst.1, worst.0, elapsed.as_secs_f64()),
    ));

    let counts = severity_counts(&problem).unwrap();
    let (mild, moderate, severe) =
        (counts[&SeverityClass::Mild], counts[&SeverityClass::Moderate], counts[&SeverityClass::Severe]);
    out.push(check(
        "P3",
        (mild, moderate, severe) == (5254, 621, 0),
        format!("Mild {mild}, Moderate {moderate}, Severe {severe}"),
    ));

    let bags = make_bags(&records).unwrap();
    let bag_subjects: BTreeSet<u32> = bags.iter().map(|b| b.subject_id).collect();
    let mil = propositionalize(&bags).unwrap();
    out.push(check(
        "P4",
        bags.len() == 995 && bag_subjects.len() == 42 && (mil.n_rows(), mil.n_features()) == (995, 18),
        format!(
            "{} bags from {} subjects, problem {}x{}",
            bags.len(),
            bag_subjects.len(),
            mil.n_rows(),
            mil.n_features()
        ),
    ));

    let m5p = cv(&problem, "m5p");
    out.push(check(
        "P5",
        within(&m5p, 0.93, 2.10) && m5p.wall_time_s.unwrap() < 300.0,
        format!("M5P {} (paper 0.9463 / 1.9285)", summary(&m5p)),
    ));

    let bag = cv(&problem, "bag-m5p");
    out.push(check(
        "P6",
        bag.pooled_mae <= 2.00 && bag.pooled_mae <= m5p.pooled_mae,
        format!("Bagging M5P {} vs M5P mae {:.4} (paper 1.8674 < 1.9285)", summary(&bag), m5p.pooled_mae),
    ));

    let rep = cv(&problem, "reptree");
    out.push(check(
        "P7",
        within(&rep, 0.90, 2.25) && rep.wall_time_s.unwrap() < 30.0,
        format!("REPTree {} (paper 0.9282 / 2.0157)", summary(&rep)),
    ));

    let knn = cv(&problem, "knn");
    out.push(check(
        "P8",
        within(&knn, 0.84, 3.00) && knn.wall_time_s.unwrap() < 60.0,
        format!("kNN {} (paper 0.8619 / 2.8239)", summary(&knn)),
    ));

    let stack = cv(&problem, "stack");
    let vote = cv(&problem, "vote");
    out.push(check(
        "P9",
        stack.pooled_mae <= 2.05 && vote.pooled_mae <= 2.05,
        format!(
            "Stacking {} / Vote {}; stacking {} voting (paper: 1.8563 < 1.9163, not asserted)",
            summary(&stack),
            summary(&vote),
            if stack.pooled_mae < vote.pooled_mae { "beats" } else { "does not beat" }
        ),
    ));

    let forest = cv(&problem, "forest");
    out.push(check(
        "P10",
        within(&forest, 0.89, 2.95),
        format!("Random Forest {} (paper 0.9167 / 2.7372)", summary(&forest)),
    ));

    let verify = run_verification(&problem, 10, 1).unwrap();
    let raw_whole = raw_rows
        .iter()
        .filter(|r| {
            let v: f64 = r[4].trim().parse().unwrap();
            (v - v.round()).abs() <= 1e-6
        })
        .count();
    out.push(check(
        "P11",
        within(&verify, 0.93, 2.10) && verify.n == raw_whole && verify.n < 5875,
        format!("{} whole-score rows, M5P {} (paper 0.95 / 1.87)", verify.n, summary(&verify)),
    ));
    out
}

fn p12(path: Option<&PathBuf>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (path, source) = match path {
        Some(p) => (p.clone(), "dataset"),
        None => (common::write_synthetic(dir.path(), 12, 40, 12), "synthetic 480-row file"),
    };
    let p = path.to_str().unwrap();
    let run = |threads: &str| {
        common::bench(&["--threads", threads, "--no-timing", "table4", "--data", p, "--seed", "1", "--format", "json"])
    };
    let (a, b) = (run("1"), run("8"));
    check(
        "P12",
        a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty(),
        format!(
            "table4 JSON with 1 and 8 threads on {source}: {} bytes, identical = {}",
            a.stdout.len(),
            a.stdout == b.stdout
        ),
    )
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, f: usize, levels: u32) -> TabularProblem {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| f64::from(rng.gen_range(0..levels))).collect()).collect();
    let y = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    TabularProblem::from_rows(&rows, y).unwrap()
}

fn knn_oracle(train: &[Vec<f64>], y: &[f64], k: usize, q: &[f64]) -> f64 {
    let f = q.len();
    let lo: Vec<f64> = (0..f).map(|j| train.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..f).map(|j| train.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let s = |v: f64, j: usize| if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.0 };
    let mut d: Vec<(f64, usize)> =
        train.iter().enumerate().map(|(i, r)| ((0..f).map(|j| (s(r[j], j) - s(q[j], j)).abs()).sum(), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let near = &d[..k];
    let zeros: Vec<usize> = near.iter().filter(|x| x.0 == 0.0).map(|x| x.1).collect();
    if !zeros.is_empty() {
        return zeros.iter().map(|&i| y[i]).sum::<f64>() / zeros.len() as f64;
    }
    near.iter().map(|x| y[x.1] / x.0).sum::<f64>() / near.iter().map(|x| 1.0 / x.0).sum::<f64>()
}

fn pop_sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Each failing sub-suite is named in the returned list.
fn oracle_suites() -> Vec<&'static str> {
    let mut failed = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(13);

    // kNN vs brute force, 200 queries.
    let train: Vec<Vec<f64>> = (0..150).map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let y: Vec<f64> = (0..150).map(|_| rng.gen_range(0.0..50.0)).collect();
    let problem = TabularProblem::from_rows(&train, y.clone()).unwrap();
    for (k, _) in [(1, ()), (7, ())] {
        let model = KnnModel::fit(&problem, k).unwrap();
        for q in 0..100 {
            let query: Vec<f64> =
                if q % 10 == 0 { train[q].clone() } else { (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect() };
            if (model.predict(&query).unwrap() - knn_oracle(&train, &y, k, &query)).abs() > 1e-9 {
                failed.push("knn");
            }
        }
    }

    // Pearson vs definition, 100 vector pairs.
    for _ in 0..100 {
        let n = rng.gen_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let z: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.gen_range(-80.0..80.0)).collect();
        let (mx, mz) = (x.iter().sum::<f64>() / n as f64, z.iter().sum::<f64>() / n as f64);
        let cov: f64 = x.iter().zip(&z).map(|(a, b)| (a - mx) * (b - mz)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vz: f64 = z.iter().map(|b| (b - mz).powi(2)).sum();
        if (pearson(&x, &z).unwrap() - cov / (vx * vz).sqrt()).abs() > 1e-12 {
            failed.push("pearson");
        }
    }

    // Least squares vs pseudo-inverse, 50 instances (every fifth 20x3 collinear).
    for case in 0..50 {
        let (n, p) = if case % 5 == 0 { (20, 3) } else { (rng.gen_range(6..40), rng.gen_range(1..5)) };
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..p).map(|_| rng.gen_range(-5.0..5.0)).collect();
                if case % 5 == 0 {
                    r[2] = r[0] - 2.0 * r[1];
                }
                r
            })
            .collect();
        let yv: Vec<f64> = rows.iter().map(|r| 2.0 + r.iter().sum::<f64>() + rng.gen_range(-1.0..1.0)).collect();
        let prob = TabularProblem::from_rows(&rows, yv.clone()).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let attrs: Vec<usize> = (0..p).collect();
        for (model, kept) in [(least_squares(&prob, &idx, &attrs).model, attrs.clone()), {
            let m = fit_linear(&prob, &idx, &attrs).model;
            let kept = m.coefficients.iter().map(|c| c.0).collect();
            (m, kept)
        }] {
            let x = DMatrix::from_fn(n, kept.len() + 1, |i, j| if j == 0 { 1.0 } else { rows[i][kept[j - 1]] });
            let fitted = x.clone() * (x.pseudo_inverse(1e-10).unwrap() * DVector::from_column_slice(&yv));
            if rows.iter().zip(fitted.iter()).any(|(r, f)| (model.predict(r) - f).abs() > 1e-6) {
                failed.push("linear");
            }
        }
    }

    // SDR >= 0 on at least 1000 splits; argmax with (feature, threshold) tie-break.
    let mut splits = 0;
    let mut problems = 0;
    while splits < 1000 || problems < 100 {
        problems += 1;
        let n = rng.gen_range(4..40);
        let base = random_problem(&mut rng, n, 3, 6);
        // Column 3 duplicates column 0 so exact ties occur.
        let rows: Vec<Vec<f64>> = base.rows().map(|r| vec![r[0], r[1], r[2], r[0]]).collect();
        let p = TabularProblem::from_rows(&rows, base.target().to_vec()).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let mut all = Vec::new();
        for f in 0..4 {
            for c in feature_splits(&p, &idx, f, SplitCriterion::StdDevReduction, 1) {
                let (l, r): (Vec<f64>, Vec<f64>) = (0..n).fold((vec![], vec![]), |(mut l, mut r), i| {
                    if p.value(i, f) <= c.threshold {
                        l.push(p.target()[i])
                    } else {
                        r.push(p.target()[i])
                    }
                    (l, r)
                });
                let sdr = pop_sd(p.target())
                    - l.len() as f64 / n as f64 * pop_sd(&l)
                    - r.len() as f64 / n as f64 * pop_sd(&r);
                if c.gain < -1e-12 || (c.gain - sdr).abs() > 1e-9 {
                    failed.push("sdr");
                }
                all.push((sdr, f, c.threshold));
                splits += 1;
            }
        }
        let best = best_split(&p, &idx, &[3, 2, 1, 0], SplitCriterion::StdDevReduction, 1);
        let top = all.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let want = all
            .iter()
            .filter(|c| c.0 >= top - 1e-12 && c.0 > 0.0)
            .min_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)));
        match (best, want) {
            (Some(b), Some(w)) if b.feature == w.1 && b.threshold == w.2 && b.feature != 3 => {}
            (None, None) => {}
            (b, w) => {
                eprintln!("argmax mismatch: got {b:?}, want {w:?}, all {all:?}");
                failed.push("argmax")
            }
        }
    }

    // RepTree prune-set error never rises.
    for s in 0..200 {
        let n = rng.gen_range(8..120);
        let p = random_problem(&mut rng, n, 3, 20);
        let tree = reptree_fit(&p, &TreeParams { seed: s, ..TreeParams::reptree() }).unwrap();
        let rep = tree.prune_report.unwrap();
        if rep.sse_after > rep.sse_before + 1e-9 * (1.0 + rep.sse_before) || rep.nodes_after > rep.nodes_before {
            failed.push("reptree");
        }
    }

    // Degenerate ensembles reproduce their single-model counterpart exactly.
    let p = random_problem(&mut rng, 150, 4, 30);
    let one = EnsembleParams { iterations: 1, sampling: Sampling::FullData, ..EnsembleParams::bagging() };
    let bases: [Arc<dyn Learner>; 2] = [Arc::new(M5pLearner::default()), Arc::new(RepTreeLearner::default())];
    for base in &bases {
        let bag = bagging_fit(base.as_ref(), &p, &one).unwrap();
        let single = base.fit(&p, derive_seed(one.seed, 0)).unwrap();
        if p.rows().any(|r| bag.predict(r).unwrap() != single.predict(r).unwrap()) {
            failed.push("bagging identity");
        }
    }
    let forest_params = EnsembleParams { features_per_split: Some(4), ..one.clone() };
    let forest = random_forest_fit(&p, &forest_params).unwrap();
    let tree = single_variance_tree(&p, &forest_params.forest_tree).unwrap();
    if p.rows().any(|r| forest.predict(r).unwrap() != tree.predict(r).unwrap()) {
        failed.push("forest identity");
    }

    failed.dedup();
    failed
}

#[test]
fn acceptance() {
    let require = std::env::var("UPDRS_REQUIRE_DATA").is_ok_and(|v| v == "1");
    let path = data_path();
    let mut outcomes = match &path {
        Some(p) => data_criteria(p),
        None => ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10", "P11"]
            .into_iter()
            .map(|id| Outcome {
                id,
                status: Status::NotRun,
                detail: "dataset not found (set UPDRS_DATA or add data/parkinsons_updrs.data)".into(),
            })
            .collect(),
    };
    outcomes.push(p12(path.as_ref()));
    let failed = oracle_suites();
    outcomes.push(check(
        "P13",
        failed.is_empty(),
        if failed.is_empty() { "all oracle suites agree".into() } else { format!("failing: {}", failed.join(", ")) },
    ));

    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for o in &outcomes {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotRun => "NOT RUN",
        };
        writeln!(out, "{} {tag}: {}", o.id, o.detail).unwrap();
    }
    drop(out);
    let bad: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.status == Status::Fail || (require && o.status == Status::NotRun))
        .map(|o| o.id)
        .collect();
    assert!(bad.is_empty(), "criteria not met: {bad:?}");
}
