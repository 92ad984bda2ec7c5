use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const OUTPUT_ENV: &str = "TNNR_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "tnnr",
    version,
    about = "Twin neural network regression experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Train one model on the first split and save it with its loss history.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Repeated-split RMSE comparison of the configured methods.
    Benchmark(ExperimentArgs),
    /// Test RMSE against dataset size.
    Datasweep(ExperimentArgs),
    /// Error against uncertainty estimators on an extrapolation split.
    Uncertainty(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// rp, rcl, wsb or ising.
    #[arg(long)]
    pub generator: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the additive target noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Ising lattice side.
    #[arg(long)]
    pub lattice: Option<usize>,
    /// CSV path; defaults to a name derived from the arguments in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Dataset selection shared by the commands that read data.
#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// CSV file to read.
    #[arg(long, conflicts_with = "generator")]
    pub data: Option<PathBuf>,
    /// Target column of the CSV file.
    #[arg(long, requires = "data")]
    pub target: Option<String>,
    /// Synthetic generator to sample instead of a file.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub lattice: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated: tnn, tnn_ensemble, ann, ann_ensemble, mc_dropout.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// random (90/5/5) or threshold (50/10/15 plus the top 25% held out).
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Gradient steps between validation checks.
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub val_anchors: Option<usize>,
    /// adadelta or rmsprop.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Learning rate (rmsprop only).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub mc_rate: Option<f64>,
    /// Comma-separated dataset sizes for a sweep.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub sweep_test_size: Option<usize>,
    #[arg(long)]
    pub loop_pairs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Method to train (tnn, ann or mc_dropout); defaults to the first configured one.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved model container.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write per-row predictions to this CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}
