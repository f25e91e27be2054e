//! `mrma`: run the simulation studies and reference computations and write
//! their results as CSV files.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mrma", version, about = "Private classification with model reversal and model averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, env = "MRMA_OUT", default_value = "results")]
    out: PathBuf,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-server study on synthetic functional data.
    SimulateSingle(SingleArgs),
    /// Several servers exchanging classifiers.
    SimulateMulti(MultiArgs),
    /// Weight kernel over a (z0, z) grid.
    OracleHeatmap(HeatmapArgs),
    /// Distance between uniform features and their perturbation.
    OracleTv(TvArgs),
    /// Single-server study on a labeled CSV file.
    RealData(RealArgs),
}

/// Protocol sizes; each overrides the preset when given.
#[derive(Debug, Args)]
struct SizeArgs {
    /// Clients contributing training pairs (N0).
    #[arg(long)]
    n_train: Option<usize>,
    /// Clients reserved for evaluation (N1).
    #[arg(long)]
    n_eval: Option<usize>,
    /// Subsample size per weak classifier.
    #[arg(long)]
    n0: Option<usize>,
    /// Evaluation clients per weak classifier.
    #[arg(long)]
    n1: Option<usize>,
    /// Number of weak classifiers.
    #[arg(long = "B", alias = "b")]
    b: Option<usize>,
    /// Utility cutoff for averaging weights.
    #[arg(long)]
    r0: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// logistic or linear-svm.
    #[arg(long, default_value = "logistic")]
    classifier: String,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    regularization: Option<f64>,
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    /// Basis for the encoding, as kind:dim.
    #[arg(long, default_value = "cubic-bspline:4")]
    basis: String,
    /// tanh or max-abs.
    #[arg(long, default_value = "tanh")]
    rescale: String,
}

#[derive(Debug, Args)]
struct SingleArgs {
    /// single or case1..case8.
    #[arg(long, default_value = "single")]
    preset: String,
    /// Comma-separated privacy budgets; inf for no noise.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Comma-separated subset of weak,mr,ma,mrma,voting,averaging,all-data.
    #[arg(long)]
    method: Option<String>,
    /// Also write per-classifier estimates and weights.
    #[arg(long)]
    diagnostics: bool,
    #[command(flatten)]
    sizes: SizeArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Debug, Args)]
struct MultiArgs {
    /// multi or multi-small.
    #[arg(long, default_value = "multi")]
    preset: String,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Cutoff for the reweighting of exchanged classifiers.
    #[arg(long)]
    r0_star: Option<f64>,
    /// Also write every server's estimates of its peers.
    #[arg(long)]
    diagnostics: bool,
    #[command(flatten)]
    sizes: SizeArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(long, default_value = "10,1,0.1,0.01")]
    epsilon_z: String,
    /// Perturbed values as start:stop:step.
    #[arg(long, default_value = "-2:2:0.05", allow_hyphen_values = true)]
    z0_grid: String,
    /// Original values in [-1, 1] as start:stop:step.
    #[arg(long, default_value = "-1:1:0.05", allow_hyphen_values = true)]
    z_grid: String,
}

#[derive(Debug, Args)]
struct TvArgs {
    /// Comma-separated dimensions.
    #[arg(long, default_value = "1,2,5,10")]
    d: String,
    #[arg(long, default_value = "0.1,0.5,1,5,10")]
    epsilon_z: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

#[derive(Debug, Args)]
struct RealArgs {
    /// Header row, feature columns, label column last.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value = "1")]
    epsilon: String,
    #[arg(long, default_value_t = 60)]
    n0: usize,
    #[arg(long, default_value_t = 60)]
    n1: usize,
    #[arg(long = "B", alias = "b", default_value_t = 30)]
    b: usize,
    #[arg(long, default_value_t = 0.7)]
    r0: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Share of records held out for testing in each trial.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    diagnostics: bool,
    #[command(flatten)]
    train: TrainArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command_line = std::iter::once("mrma".to_owned())
        .chain(std::env::args().skip(1))
        .collect::<Vec<_>>()
        .join(" ");
    match run::dispatch(&cli, &command_line) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrma: error: {e}");
            ExitCode::FAILURE
        }
    }
}
