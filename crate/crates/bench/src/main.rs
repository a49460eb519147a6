use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use updrs_core::data::{load_csv, select_features, severity_counts, DataError, Record, TabularProblem};
use updrs_core::harness::{
    cross_validate, method_preset, render_json, run_classification, run_mil, run_table2, run_table3, run_table4,
    run_verification, HarnessError, Render, StripTiming, DEFAULT_FOLDS, DEFAULT_SEED,
};

#[derive(Parser)]
#[command(name = "updrs-bench", version, about = "Cross-validated regression benchmarks on voice telemonitoring data")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Report wall time as null, making reports of identical runs byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    M5p,
    Reptree,
    Knn,
    BagM5p,
    Stack,
    Vote,
    Forest,
}

impl Method {
    fn key(self) -> &'static str {
        match self {
            Self::M5p => "m5p",
            Self::Reptree => "reptree",
            Self::Knn => "knn",
            Self::BagM5p => "bag-m5p",
            Self::Stack => "stack",
            Self::Vote => "vote",
            Self::Forest => "forest",
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the data file and print a summary.
    Load {
        #[arg(long)]
        data: PathBuf,
    },
    /// Feature correlations with the motor score.
    Table2 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// M5P, REPTree and kNN under cross-validation.
    Table3(Common),
    /// Bagging, stacking, voting and random forest under cross-validation.
    Table4(Common),
    /// M5P on the rows with a whole-number motor score.
    Verify(Common),
    /// Severity-class kNN classification.
    Classify(Common),
    /// M5P on per-day bags of recordings.
    Mil(Common),
    /// Cross-validate a single method.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Method,
        /// Also fit on all rows and write the model dump here.
        #[arg(long)]
        dump_model: Option<PathBuf>,
    },
}

enum Failure {
    Data(String),
    Config(String),
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command, cli.no_timing) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &PathBuf) -> Result<(Vec<Record>, TabularProblem), Failure> {
    let records = load_csv(path)?;
    let problem = select_features(&records)?;
    Ok((records, problem))
}

fn emit<T: Serialize + Render + StripTiming>(mut report: T, format: Format, no_timing: bool) -> String {
    if no_timing {
        report.strip_timing();
    }
    match format {
        Format::Md => report.markdown(),
        Format::Json => render_json(&report),
    }
}

fn run(command: Command, no_timing: bool) -> Result<String, Failure> {
    Ok(match command {
        Command::Load { data } => {
            let (records, problem) = load(&data)?;
            let subjects: std::collections::BTreeSet<u32> = records.iter().map(|r| r.subject_id).collect();
            let counts = severity_counts(&problem)?;
            let dist: Vec<String> = counts.iter().map(|(c, n)| format!("{c}: {n}")).collect();
            format!(
                "records: {}\nsubjects: {}\nfeatures: {}\nseverity classes: {{{}}}\n",
                records.len(),
                subjects.len(),
                problem.n_features(),
                dist.join(", ")
            )
        }
        Command::Table2 { data, format } => emit(run_table2(&load(&data)?.1)?, format, no_timing),
        Command::Table3(c) => emit(run_table3(&load(&c.data)?.1, c.folds, c.seed)?, c.format, no_timing),
        Command::Table4(c) => emit(run_table4(&load(&c.data)?.1, c.folds, c.seed)?, c.format, no_timing),
        Command::Verify(c) => emit(run_verification(&load(&c.data)?.1, c.folds, c.seed)?, c.format, no_timing),
        Command::Classify(c) => emit(run_classification(&load(&c.data)?.1, c.folds, c.seed)?, c.format, no_timing),
        Command::Mil(c) => emit(run_mil(&load(&c.data)?.0, c.folds, c.seed)?, c.format, no_timing),
        Command::Run { common: c, method, dump_model } => {
            let (_, problem) = load(&c.data)?;
            let learner = method_preset(method.key())?;
            let report = cross_validate(&problem, learner.as_ref(), c.folds, c.seed, "full")?;
            if let Some(path) = dump_model {
                let model = learner.fit(&problem, c.seed).map_err(|e| Failure::Data(format!("full-data fit: {e}")))?;
                std::fs::write(&path, model.dump(problem.feature_names()))
                    .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
            }
            emit(report, c.format, no_timing)
        }
    })
}
