//! Loading and reshaping the telemonitoring voice-recording table.
//!
//! The input is the public comma-separated file with one row per voice
//! recording. [`load_csv`] validates it into [`Record`]s; everything else in
//! this module turns records into a [`TabularProblem`], the matrix + target
//! unit every learner consumes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column names of the input file, in the canonical order.
pub const CSV_COLUMNS: [&str; 22] = [
    "subject#",
    "age",
    "sex",
    "test_time",
    "motor_UPDRS",
    "total_UPDRS",
    "Jitter(%)",
    "Jitter(Abs)",
    "Jitter:RAP",
    "Jitter:PPQ5",
    "Jitter:DDP",
    "Shimmer",
    "Shimmer(dB)",
    "Shimmer:APQ3",
    "Shimmer:APQ5",
    "Shimmer:APQ11",
    "Shimmer:DDA",
    "NHR",
    "HNR",
    "RPDE",
    "DFA",
    "PPE",
];

/// The 18 learning features, in the fixed column order of every problem
/// built by [`select_features`] and [`propositionalize`].
pub const FEATURE_NAMES: [&str; 18] = [
    "age",
    "sex",
    "Jitter(%)",
    "Jitter(Abs)",
    "Jitter:RAP",
    "Jitter:PPQ5",
    "Jitter:DDP",
    "Shimmer",
    "Shimmer(dB)",
    "Shimmer:APQ3",
    "Shimmer:APQ5",
    "Shimmer:APQ11",
    "Shimmer:DDA",
    "NHR",
    "HNR",
    "RPDE",
    "DFA",
    "PPE",
];

pub const MOTOR_UPDRS_MAX: f64 = 108.0;

/// Absolute tolerance used to decide a motor UPDRS value is a whole number.
pub const WHOLE_NUMBER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("data file not found: {0}")]
    MissingFile(String),
    #[error("schema mismatch: expected column `{0}` is missing from the header")]
    SchemaMismatch(String),
    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    ParseError { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: value {value} is outside {allowed}")]
    RangeError { row: usize, column: String, value: f64, allowed: &'static str },
    #[error("motor UPDRS {0} is outside [0, 108]")]
    ScoreOutOfRange(f64),
    #[error("input is empty")]
    EmptyInput,
    #[error("no row has a whole-number target")]
    EmptySubset,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("I/O error reading data: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// One voice recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub subject_id: u32,
    pub age: u32,
    /// 0 = male, 1 = female.
    pub sex: u8,
    /// Days since recruitment; the integer part is the session day.
    pub test_time: f64,
    pub motor_updrs: f64,
    pub total_updrs: f64,
    pub jitter_pct: f64,
    pub jitter_abs: f64,
    pub jitter_rap: f64,
    pub jitter_ppq5: f64,
    pub jitter_ddp: f64,
    pub shimmer: f64,
    pub shimmer_db: f64,
    pub shimmer_apq3: f64,
    pub shimmer_apq5: f64,
    pub shimmer_apq11: f64,
    pub shimmer_dda: f64,
    pub nhr: f64,
    pub hnr: f64,
    pub rpde: f64,
    pub dfa: f64,
    pub ppe: f64,
}

impl Record {
    /// The 18 learning features in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; 18] {
        [
            f64::from(self.age),
            f64::from(self.sex),
            self.jitter_pct,
            self.jitter_abs,
            self.jitter_rap,
            self.jitter_ppq5,
            self.jitter_ddp,
            self.shimmer,
            self.shimmer_db,
            self.shimmer_apq3,
            self.shimmer_apq5,
            self.shimmer_apq11,
            self.shimmer_dda,
            self.nhr,
            self.hnr,
            self.rpde,
            self.dfa,
            self.ppe,
        ]
    }

    /// Session day: the integer part of `test_time`, rounded toward -inf.
    pub fn time_step(&self) -> i64 {
        self.test_time.floor() as i64
    }
}

/// Reads the telemonitoring CSV at `path`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Record>, DataError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    parse_csv(file)
}

/// Parses telemonitoring CSV text from any reader. Data rows are numbered
/// from 1 in errors.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<Record>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);

    let header = rdr.headers()?.clone();
    let mut positions = [0usize; 22];
    for (slot, name) in positions.iter_mut().zip(CSV_COLUMNS) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| DataError::SchemaMismatch(name.to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let mut vals = [0.0f64; 22];
        for (c, (&pos, name)) in positions.iter().zip(CSV_COLUMNS).enumerate() {
            let raw = row.get(pos).unwrap_or("");
            vals[c] = match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(DataError::ParseError { row: row_no, column: name.to_string(), value: raw.to_string() })
                }
            };
        }
        records.push(record_from_values(row_no, &vals)?);
    }
    Ok(records)
}

fn whole(row: usize, column: &str, v: f64) -> Result<u32, DataError> {
    if v.fract() != 0.0 || v < 0.0 || v > f64::from(u32::MAX) {
        return Err(DataError::ParseError { row, column: column.to_string(), value: v.to_string() });
    }
    Ok(v as u32)
}

fn record_from_values(row: usize, v: &[f64; 22]) -> Result<Record, DataError> {
    let subject_id = whole(row, CSV_COLUMNS[0], v[0])?;
    let age = whole(row, CSV_COLUMNS[1], v[1])?;
    let sex = match v[2] {
        0.0 => 0,
        1.0 => 1,
        s => {
            return Err(DataError::RangeError { row, column: CSV_COLUMNS[2].to_string(), value: s, allowed: "{0, 1}" })
        }
    };
    if !(0.0..=MOTOR_UPDRS_MAX).contains(&v[4]) {
        return Err(DataError::RangeError {
            row,
            column: CSV_COLUMNS[4].to_string(),
            value: v[4],
            allowed: "[0, 108]",
        });
    }
    Ok(Record {
        subject_id,
        age,
        sex,
        test_time: v[3],
        motor_updrs: v[4],
        total_updrs: v[5],
        jitter_pct: v[6],
        jitter_abs: v[7],
        jitter_rap: v[8],
        jitter_ppq5: v[9],
        jitter_ddp: v[10],
        shimmer: v[11],
        shimmer_db: v[12],
        shimmer_apq3: v[13],
        shimmer_apq5: v[14],
        shimmer_apq11: v[15],
        shimmer_dda: v[16],
        nhr: v[17],
        hnr: v[18],
        rpde: v[19],
        dfa: v[20],
        ppe: v[21],
    })
}

/// Provenance of a problem row: the subject and the recording time (or the
/// session day, for propositionalized bags).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub subject_id: u32,
    pub test_time: f64,
}

/// Immutable N×F feature matrix with a target vector.
///
/// Rows are stored contiguously (row-major). Construction validates shape,
/// finiteness and feature-name uniqueness, so every learner can assume them.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularProblem {
    features: Vec<f64>,
    target: Vec<f64>,
    feature_names: Vec<String>,
    row_keys: Vec<RowKey>,
}

impl TabularProblem {
    pub fn new(
        features: Vec<f64>,
        target: Vec<f64>,
        feature_names: Vec<String>,
        row_keys: Vec<RowKey>,
    ) -> Result<Self, DataError> {
        let n = target.len();
        let f = feature_names.len();
        if n == 0 || f == 0 {
            return Err(DataError::InvalidProblem(format!("need at least one row and one feature (got {n}×{f})")));
        }
        if features.len() != n * f {
            return Err(DataError::InvalidProblem(format!(
                "feature matrix has {} cells, expected {n}×{f}",
                features.len()
            )));
        }
        if row_keys.len() != n {
            return Err(DataError::InvalidProblem(format!("{} row keys for {n} rows", row_keys.len())));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidProblem(format!("non-finite feature at row {}, column {}", i / f, i % f)));
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidProblem(format!("non-finite target at row {i}")));
        }
        for (j, name) in feature_names.iter().enumerate() {
            if feature_names[..j].contains(name) {
                return Err(DataError::InvalidProblem(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { features, target, feature_names, row_keys })
    }

    /// Builds a problem from row vectors, with synthetic row keys
    /// (subject 0, time = row index). Convenient for tests and tools.
    pub fn from_rows(rows: &[Vec<f64>], target: Vec<f64>) -> Result<Self, DataError> {
        let f = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != f) {
            return Err(DataError::InvalidProblem("ragged rows".into()));
        }
        let names = (0..f).map(|j| format!("x{j}")).collect();
        let keys = (0..rows.len()).map(|i| RowKey { subject_id: 0, test_time: i as f64 }).collect();
        Self::new(rows.concat(), target, names, keys)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_features();
        &self.features[i * f..(i + 1) * f]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features())
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows().map(|r| r[feature]).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    /// A new problem holding the given rows (repeats allowed), in order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self, DataError> {
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Self::new(
            features,
            rows.iter().map(|&i| self.target[i]).collect(),
            self.feature_names.clone(),
            rows.iter().map(|&i| self.row_keys[i]).collect(),
        )
    }

    /// Same features and row keys with a replaced target vector.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Self, DataError> {
        Self::new(self.features.clone(), target, self.feature_names.clone(), self.row_keys.clone())
    }
}

/// The 18-feature problem with motor UPDRS as target.
pub fn select_features(records: &[Record]) -> Result<TabularProblem, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut features = Vec::with_capacity(records.len() * FEATURE_NAMES.len());
    for r in records {
        features.extend_from_slice(&r.features());
    }
    TabularProblem::new(
        features,
        records.iter().map(|r| r.motor_updrs).collect(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        records.iter().map(|r| RowKey { subject_id: r.subject_id, test_time: r.test_time }).collect(),
    )
}

pub fn is_whole_number(v: f64) -> bool {
    (v - v.round()).abs() <= WHOLE_NUMBER_TOLERANCE
}

/// Rows whose target is a whole number (within [`WHOLE_NUMBER_TOLERANCE`]),
/// i.e. the ones most likely to carry a clinician-assessed score rather than
/// an interpolated one.
pub fn whole_updrs_subset(problem: &TabularProblem) -> Result<TabularProblem, DataError> {
    let keep: Vec<usize> = (0..problem.n_rows()).filter(|&i| is_whole_number(problem.target()[i])).collect();
    if keep.is_empty() {
        return Err(DataError::EmptySubset);
    }
    problem.subset(&keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    Mild,
    Moderate,
    Severe,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 3] = [Self::Mild, Self::Moderate, Self::Severe];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Mild => "Mild",
            Self::Moderate => "Moderate",
            Self::Severe => "Severe",
        };
        f.write_str(s)
    }
}

/// Half-open bins: [0,33) mild, [33,59) moderate, [59,108] severe.
pub fn discretize_severity(motor_updrs: f64) -> Result<SeverityClass, DataError> {
    if !(0.0..=MOTOR_UPDRS_MAX).contains(&motor_updrs) {
        return Err(DataError::ScoreOutOfRange(motor_updrs));
    }
    Ok(if motor_updrs < 33.0 {
        SeverityClass::Mild
    } else if motor_updrs < 59.0 {
        SeverityClass::Moderate
    } else {
        SeverityClass::Severe
    })
}

/// Class counts over every row's target. All three classes are present as
/// keys, possibly with a zero count.
pub fn severity_counts(problem: &TabularProblem) -> Result<BTreeMap<SeverityClass, usize>, DataError> {
    let mut counts: BTreeMap<SeverityClass, usize> = SeverityClass::ALL.iter().map(|&c| (c, 0)).collect();
    for &t in problem.target() {
        *counts.entry(discretize_severity(t)?).or_default() += 1;
    }
    Ok(counts)
}

/// One subject's recordings from a single session day.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub subject_id: u32,
    pub time_step: i64,
    pub members: Vec<Record>,
    pub bag_target: f64,
}

/// Groups records by (subject, floor(test_time)). Bags come out sorted by
/// that key; members keep their input order.
pub fn make_bags(records: &[Record]) -> Result<Vec<Bag>, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut groups: BTreeMap<(u32, i64), Vec<Record>> = BTreeMap::new();
    for r in records {
        groups.entry((r.subject_id, r.time_step())).or_default().push(r.clone());
    }
    Ok(groups
        .into_iter()
        .map(|((subject_id, time_step), members)| {
            let bag_target = mean(members.iter().map(|m| m.motor_updrs));
            Bag { subject_id, time_step, members, bag_target }
        })
        .collect())
}

/// One row per bag: per-feature means over the members, target = bag target.
pub fn propositionalize(bags: &[Bag]) -> Result<TabularProblem, DataError> {
    if bags.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut features = Vec::with_capacity(bags.len() * FEATURE_NAMES.len());
    for bag in bags {
        if bag.members.is_empty() {
            return Err(DataError::EmptyInput);
        }
        for j in 0..FEATURE_NAMES.len() {
            features.push(mean(bag.members.iter().map(|m| m.features()[j])));
        }
    }
    TabularProblem::new(
        features,
        bags.iter().map(|b| b.bag_target).collect(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        bags.iter().map(|b| RowKey { subject_id: b.subject_id, test_time: b.time_step as f64 }).collect(),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (crate::metrics::KahanSum::default(), 0usize);
    for v in values {
        sum.add(v);
        n += 1;
    }
    sum.total() / n as f64
}
