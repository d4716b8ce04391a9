use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Exit codes are a stable contract for scripts and CI.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUN_FAILURES: u8 = 3;
pub const EXIT_INTEGRITY: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_USAGE, error: error.into() }
    }

    pub fn integrity(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_INTEGRITY, error: error.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        Failure { code: EXIT_FAILURE, error: error.into() }
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "noveval", version, about = "Evaluation harness for patent novelty search systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an evaluation dataset from a corpus.
    BuildDataset(BuildArgs),
    /// Run a system over every query of a dataset.
    Run(RunArgs),
    /// Compute metrics and breakdowns for a run log.
    Evaluate(EvaluateArgs),
    /// Compare two run logs with paired bootstrap significance.
    Compare(CompareArgs),
    /// Check a corpus for dangling citations and malformed records.
    Validate(ValidateArgs),
    /// Write a deterministic synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON file: {"dimension": "language", "proportions": {"zh": 0.5, ...}}
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = noveval::dataset::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = noveval::dataset::DEFAULT_RECENCY_YEARS)]
    pub recency_years: u32,
    /// Number of queries to sample (default: all candidates).
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Skip malformed corpus lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Corpus the dataset was built from (query text comes from it).
    #[arg(long)]
    pub corpus: PathBuf,
    /// "reference" or "remote".
    #[arg(long, default_value = "reference")]
    pub adapter: String,
    /// Endpoint configuration for the remote adapter.
    #[arg(long)]
    pub adapter_config: Option<PathBuf>,
    /// Adapter id recorded in the run log (remote adapter).
    #[arg(long)]
    pub adapter_id: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = noveval::execution::DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
    #[arg(long, default_value_t = noveval::execution::DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Reference adapter: keep the query's own family members in results.
    #[arg(long)]
    pub include_family: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Needed for family matching and the cross-language matrix.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10,20,30,50,100")]
    pub k_grid: Vec<usize>,
    /// exact or family
    #[arg(long, default_value = "exact")]
    pub match_rule: String,
    /// Report macro-averaged recall instead of micro.
    #[arg(long = "macro")]
    pub macro_recall: bool,
    #[arg(long, value_delimiter = ',', default_value = "language,ipc_section,jurisdiction")]
    pub dimensions: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "text,csv,svg")]
    pub formats: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run log to evaluate.
    #[arg(long)]
    pub run: PathBuf,
    /// System name used in reports (default: the run's adapter id).
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline run log.
    #[arg(long)]
    pub run_a: PathBuf,
    /// Candidate run log; deltas are candidate minus baseline.
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long)]
    pub name_a: Option<String>,
    #[arg(long)]
    pub name_b: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    /// Bootstrap strata (default: language and IPC section).
    #[arg(long, value_delimiter = ',', default_value = "language,ipc_section")]
    pub strata: Vec<String>,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Exit with code 2 when any defect is found.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_docs: usize,
    /// Render every document in one language.
    #[arg(long)]
    pub language: Option<String>,
    /// Write the planted near-copy corpus with this many queries instead.
    #[arg(long)]
    pub planted: Option<usize>,
    #[arg(long, default_value = "2025-01-01")]
    pub reference_date: String,
    /// Inject one of each validation defect.
    #[arg(long)]
    pub defects: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(Failure::usage(anyhow::anyhow!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

pub fn parse_formats(raw: &[String]) -> Result<BTreeSet<noveval::report::ReportFormat>, Failure> {
    raw.iter()
        .map(|f| f.parse().map_err(Failure::usage))
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildDataset(a) => commands::build_dataset(a),
        Command::Run(a) => commands::run(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Validate(a) => commands::validate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
