//! `setvalued`: fit Gaussian category models, classify observations into
//! optimal sets, tune cost parameters and calibrate conformal regions.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 malformed input,
//! 3 incompatible arguments or dimensions, 4 cross-validation preconditions.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "setvalued", version, about = "Optimal Bayes set-valued classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-category Gaussian models to a labeled CSV.
    Fit(FitArgs),
    /// Classify every row of a CSV into its optimal set.
    Classify(ClassifyArgs),
    /// Leave-one-out tuning of the composite cost parameter b.
    Tune(TuneArgs),
    /// Calibrate the conformal cost for a target error rate.
    Conformal(ConformalArgs),
    /// Generate a synthetic labeled Gaussian dataset.
    Synth(SynthArgs),
    /// Non-reward rates over an (a, b) lattice.
    GridScan(GridScanArgs),
    /// Compare closed-form classifiers with exhaustive search.
    SelfCheck(SelfCheckArgs),
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    /// Training CSV with a `label` column, an optional `block` column and
    /// numeric feature columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Monte-Carlo draws per category.
    #[arg(long, default_value_t = setvalued::gaussian::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct ClassifyArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Observations CSV; `label` and `block` columns are ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Reward as JSON, e.g. '{"kind":"proportion","c":0.25}', or @file.
    #[arg(long)]
    pub reward: String,
    /// Prior over categories: flat, prop (training proportions) or a
    /// comma-separated vector.
    #[arg(long, default_value = "flat")]
    pub prior: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Add the exhaustive-search optimal value per row.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args, Serialize)]
pub struct TuneArgs {
    /// Training CSV as for `fit`.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving curve CSVs and selection JSON files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Ratio a/b; repeat for several runs.
    #[arg(long = "epsilon", default_values_t = vec![0.5, 2.0])]
    pub epsilons: Vec<f64>,
    /// Tolerated non-reward rate for the threshold rule.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Grid of b as lo:hi:step.
    #[arg(long, default_value = "0.01:20:0.01")]
    pub grid: String,
    /// Weight scheme: per_bird, per_species or rarity.
    #[arg(long, default_value = "per_bird")]
    pub weights: String,
    /// Real category frequencies for rarity weights (comma-separated).
    #[arg(long)]
    pub real_prior: Option<String>,
    /// Prior over categories: flat, prop or a comma-separated vector.
    #[arg(long, default_value = "flat")]
    pub prior: String,
    #[arg(long, default_value_t = setvalued::gaussian::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for fold evaluation.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Serialize)]
pub struct ConformalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Target probability of excluding the true category.
    #[arg(long)]
    pub delta: f64,
    /// Calibration sample size.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "flat")]
    pub prior: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate coverage on a fresh sample of the same size.
    #[arg(long)]
    pub audit: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Built-in generator: table1 (four categories, three features).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Generator JSON with per-category label, block, count, mean and cov.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct GridScanArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Grid of a as lo:hi:step (lo may be 0).
    #[arg(long, default_value = "0:2:0.1")]
    pub a_grid: String,
    /// Grid of b as lo:hi:step.
    #[arg(long, default_value = "0.1:5:0.1")]
    pub b_grid: String,
    /// Binary reward: R1, R2, R3 or R4.
    #[arg(long, default_value = "R2")]
    pub variant: String,
    #[arg(long, default_value = "per_bird")]
    pub weights: String,
    #[arg(long)]
    pub real_prior: Option<String>,
    #[arg(long, default_value = "flat")]
    pub prior: String,
    #[arg(long, default_value_t = setvalued::gaussian::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SelfCheckArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Largest number of categories per instance.
    #[arg(long, default_value_t = 10)]
    pub max_categories: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Classify(args) => commands::classify(args),
        Command::Tune(args) => commands::tune(args),
        Command::Conformal(args) => commands::conformal(args),
        Command::Synth(args) => commands::synth(args),
        Command::GridScan(args) => commands::grid_scan(args),
        Command::SelfCheck(args) => commands::self_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
