//! The `cohesion` command line: mine, score, monitor, evaluate, report.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evaluator::{Metric, Ratio};
use crate::scorer::{MaskMode, ProbabilityMode, RemoteConfig, ScoringConfig};

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_MISSING_SCORES: i32 = 4;
pub const EXIT_EVALUATION: i32 = 5;
pub const EXIT_SNIPPETS: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "cohesion", version, about = "Flag anomalous drops in function-name cohesion across C++ history")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract every function version from the first-parent history of a repository.
    Mine(MineArgs),
    /// Score every mined version with a fill-mask backend.
    Score(ScoreArgs),
    /// Rank consecutive version pairs by a cohesion-drop metric.
    Monitor(MonitorArgs),
    /// Run the injection experiment and report precision at k.
    Evaluate(EvaluateArgs),
    /// Emit CSV data for distributions, size buckets, correlations and curves.
    Report(ReportArgs),
}

#[derive(Debug, Args, serde::Serialize)]
struct MineArgs {
    #[arg(long)]
    repo: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// File extension to scan, repeatable (default: .cpp .cc .cxx .h .hpp).
    #[arg(long = "ext")]
    extensions: Vec<String>,
}

#[derive(Debug, Args, serde::Serialize)]
struct BackendArgs {
    /// Use the deterministic offline backend.
    #[arg(long)]
    mock: bool,
    #[arg(long, env = "COHESION_BACKEND_URL")]
    backend_url: Option<String>,
    /// Extra attempts after a connection failure or server error.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Mask the name in the body too, renaming other occurrences.
    #[arg(long)]
    mask_all: bool,
    /// Score the probability of the true name's pieces instead of the top token.
    #[arg(long)]
    gold_tokens: bool,
    /// Skip constructors, destructors and operators.
    #[arg(long)]
    exclude_special: bool,
}

impl BackendArgs {
    fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            mask_mode: if self.mask_all { MaskMode::AllOccurrences } else { MaskMode::DeclarationSite },
            probability_mode: if self.gold_tokens { ProbabilityMode::GoldTokens } else { ProbabilityMode::TopOne },
            exclude_special: self.exclude_special,
        }
    }

    fn remote(&self) -> RemoteConfig {
        RemoteConfig { retries: self.retries, timeout: Duration::from_secs(self.timeout_secs), ..RemoteConfig::default() }
    }
}

#[derive(Debug, Args, serde::Serialize)]
struct ScoreArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the mock backend.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Ignore an existing output file instead of resuming it.
    #[arg(long)]
    fresh: bool,
}

#[derive(Debug, Args, serde::Serialize)]
struct MonitorArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value = "cdz", value_parser = parse_delta_metric)]
    metric: Metric,
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Human-readable report destination.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Snippet manifest or directory; the built-in corpus when absent.
    #[arg(long)]
    snippets: Option<PathBuf>,
    /// Malicious:benign ratio such as 1:100, repeatable.
    #[arg(long = "ratio", default_value = "1:100")]
    ratios: Vec<Ratio>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ranking metric, repeatable (default: cd otcd cdz otcdz).
    #[arg(long = "metric")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    high_cohesion_only: bool,
    /// Run every configuration with and without the high-cohesion filter.
    #[arg(long, conflicts_with = "high_cohesion_only")]
    both_filters: bool,
    /// Fit bucket statistics with injected pairs included.
    #[arg(long)]
    contaminated_stats: bool,
    /// Add the label-reading oracle metric.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    backend: BackendArgs,
    /// JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReportKind {
    Histogram,
    SizeBuckets,
    Correlation,
    OtcCurves,
    InjectionImpact,
}

#[derive(Debug, Args, serde::Serialize)]
struct ReportArgs {
    #[arg(long, value_enum)]
    kind: ReportKind,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    bin_width: f64,
    #[arg(long)]
    snippets: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Functions sampled for injection-impact, in store order.
    #[arg(long, default_value_t = 500)]
    max_functions: usize,
    #[command(flatten)]
    backend: BackendArgs,
}

fn parse_delta_metric(s: &str) -> Result<Metric, String> {
    let m: Metric = s.parse().map_err(|e: String| e)?;
    if Metric::DELTAS.contains(&m) {
        Ok(m)
    } else {
        Err(format!("`{s}` is not one of cd, otcd, cdz, otcdz"))
    }
}

/// A failed command: exit status plus the message printed to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

trait OrExit<T> {
    fn or_exit(self, code: i32) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: i32) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: i32, msg: impl fmt::Display) -> Result<T, Failure> {
    Err(Failure { code, error: anyhow::anyhow!("{msg}") })
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Mine(a) => commands::mine(a),
        Command::Score(a) => commands::score(a),
        Command::Monitor(a) => commands::monitor(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
