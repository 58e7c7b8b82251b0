//! Command-line front end for the `figs` library: CSV in, JSON models and
//! reports out.

pub mod artifact;
mod commands;
pub mod error;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use artifact::{AnyModel, Method, ModelFile};
pub use commands::run;
pub use error::{CliError, CliResult, EXIT_COMPUTE, EXIT_INPUT};

#[derive(Debug, Parser)]
#[command(name = "figs", version, about = "Fit and evaluate greedy tree-sum models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Fit(FitArgs),
    /// Write predictions for every row of a CSV.
    Predict(PredictArgs),
    /// Report metrics of a saved model on a labelled CSV.
    Eval(EvalArgs),
    /// Draw a synthetic dataset from a JSON spec.
    Synth(SynthArgs),
    /// Jaccard stability of the split-feature set under label flips.
    Stability(StabilityArgs),
    /// Convergence-rate experiment for the oracle grid tree-sum.
    Rate(RateArgs),
    /// Test metrics across split budgets, one row per (method, budget).
    Curve(CurveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Reg,
    Cls,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long)]
    pub weight_col: Option<String>,
    #[arg(long)]
    pub group_col: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "reg")]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value = "figs")]
    pub method: Method,
    #[arg(long, default_value_t = 10)]
    pub max_splits: usize,
    #[arg(long, default_value_t = 0.0)]
    pub min_impurity_decrease: f64,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Backfitting cycles after growth.
    #[arg(long, default_value_t = 0)]
    pub backfit: usize,
    /// Inverse L2 strength of the logistic membership model.
    #[arg(long, default_value_t = 2.8)]
    pub membership_l2: f64,
    /// Comma-separated feature names or indices kept out of the membership model.
    #[arg(long, value_delimiter = ',')]
    pub exclude_features: Vec<String>,
    /// Externally computed membership weights, as GROUP=PATH (repeatable).
    #[arg(long)]
    pub group_weights: Vec<String>,
    /// Reweight classes so positives and negatives carry equal total weight.
    #[arg(long)]
    pub class_weighted: bool,
    #[arg(long, default_value_t = 100)]
    pub n_estimators: usize,
    /// auto, sqrt, third, all, or a count.
    #[arg(long, default_value = "auto")]
    pub max_features: String,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.92,0.94,0.96,0.98")]
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Output CSV; the spec is copied next to it with a `.spec.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Flip fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub p: Vec<f64>,
    /// Perturbed copies per flip fraction.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Optional CSV of (n, mean_mse, empty_fraction).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Held-out CSV with the same columns as the input.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "figs,cart")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub budgets: Vec<usize>,
    /// Optional CSV of the rows.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
