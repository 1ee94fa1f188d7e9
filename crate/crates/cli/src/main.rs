//! `cns`: cluster CSV data by non-parametric smoothing.

mod eval;
mod fit;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cns_core::data::DEFAULT_MAX_PCS;
use cns_core::select::{DEFAULT_CAP, DEFAULT_K_MAX};
use cns_core::{CnsError, DistanceMetric, LabelColumn};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  could not write an output file
  2  invalid command-line arguments
  3  input file could not be read
  4  malformed input (parse error, empty file, missing label column)
  5  unusable data (non-finite values, all columns constant)
  6  graph construction failed (bad k, zero-norm row under cosine)
  7  solver failure (lambda outside (0, 1), no convergence, invalid assignment)
  8  model selection failed (empty grid, too few candidates)
  9  evaluation failed (label files of different lengths)";

#[derive(Parser)]
#[command(name = "cns", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster one CSV file, choosing k, lambda and K automatically.
    Fit(FitArgs),
    /// Compare predicted labels against ground truth.
    Eval(EvalArgs),
    /// Fit every labelled CSV in a directory under both metrics and tabulate
    /// agreement with the withheld labels.
    Sweep(SweepArgs),
}

/// A grid given as `auto` or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid<T> {
    Auto,
    Values(Vec<T>),
}

impl<T> Grid<T> {
    pub fn values(self) -> Option<Vec<T>> {
        match self {
            Grid::Auto => None,
            Grid::Values(v) => Some(v),
        }
    }
}

fn parse_grid<T: std::str::FromStr>(s: &str) -> Result<Grid<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(Grid::Auto);
    }
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| format!("'{}': {e}", v.trim())))
        .collect::<Result<Vec<T>, String>>()?;
    if values.is_empty() {
        return Err("empty grid".into());
    }
    Ok(Grid::Values(values))
}

fn parse_k_grid(s: &str) -> Result<Grid<usize>, String> {
    parse_grid(s)
}

fn parse_lambda_grid(s: &str) -> Result<Grid<f64>, String> {
    parse_grid(s)
}

fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    Ok(s.parse().expect("infallible"))
}

/// Options shared by `fit` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Candidate neighbour counts: comma list or "auto".
    #[arg(long, value_parser = parse_k_grid, default_value = "auto")]
    pub k_grid: Grid<usize>,
    /// Candidate lambda values in (0, 1): comma list or "auto".
    #[arg(long, value_parser = parse_lambda_grid, default_value = "auto")]
    pub lambda_grid: Grid<f64>,
    /// Largest number of clusters to try.
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    pub kmax: usize,
    /// Cap on the number of candidate informative points.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
    /// Residual tolerance for resolvent solves.
    #[arg(long, default_value_t = cns_core::chain::DEFAULT_TOL)]
    pub tol: f64,
    /// Skip the projection onto principal components.
    #[arg(long)]
    pub no_pca: bool,
    /// Number of principal components kept when projecting.
    #[arg(long, default_value_t = DEFAULT_MAX_PCS)]
    pub max_pcs: usize,
    /// Do not centre columns after scaling them to unit variance.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Input CSV file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Column to remove before clustering: header name, "#N" for the N-th
    /// column, or "last".
    #[arg(long, value_parser = parse_label_column)]
    pub label_column: Option<LabelColumn>,
    /// The input has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Distance between points: euclidean or cosine.
    #[arg(long, value_name = "METRIC", default_value = "euclidean")]
    pub metric: DistanceMetric,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write hard labels (CSV: row,label).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Where to write the soft assignment (CSV: row,p1..pK).
    #[arg(long)]
    pub soft_out: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Where to write the chosen kNN graph (CSV: row,col,weight).
    #[arg(long)]
    pub graph_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted labels (CSV with a label column, optionally preceded by a
    /// row column).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth labels in the same format.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Directory of CSV files, each with a header and a label column.
    #[arg(long)]
    pub dir: PathBuf,
    /// Label column in every file.
    #[arg(long, value_parser = parse_label_column, default_value = "last")]
    pub label_column: LabelColumn,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write the results as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failures of the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CnsError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn output(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => e.class().exit_code() as u8,
            CliError::Output { .. } => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::Sweep(args) => sweep::run(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
