use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kdecorrect::{Criterion, Method, Selection};

/// Kernel density estimation for correcting noisy measurements.
#[derive(Debug, Parser)]
#[command(name = "kdecorrect", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a bandwidth on a CSV and save the fitted model.
    Fit(FitArgs),
    /// Correct the output column of a CSV with a saved model.
    Predict(PredictArgs),
    /// Run the method/criterion benchmark grid.
    #[command(subcommand)]
    Bench(BenchSource),
    /// Export a joint or conditional density grid for plotting.
    Density(DensityArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_col: String,
    /// fw, aw, sw or saw.
    #[arg(long)]
    pub method: Method,
    /// lscv, mcse, scott or silverman.
    #[arg(long)]
    pub criterion: Selection,
    #[arg(long, default_value_t = kdecorrect::bandwidth::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Recorded in the model file; selection itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = kdecorrect::conditional::DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Subcommand)]
pub enum BenchSource {
    /// Regenerated one-input example, `Y = X/4 + sin X + noise`.
    Example1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[command(flatten)]
        common: BenchCommon,
    },
    /// Synthetic mast-shading data (mast speed, mast direction, reference speed).
    Shading {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3000)]
        m: usize,
        #[command(flatten)]
        common: BenchCommon,
    },
    /// A user-supplied CSV.
    Csv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_col: String,
        /// Input column compared directly with the output for the raw RMSE.
        #[arg(long)]
        raw_col: Option<String>,
        #[command(flatten)]
        common: BenchCommon,
    },
}

#[derive(Debug, Args)]
pub struct BenchCommon {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "fw,aw,sw,saw")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "lscv,mcse")]
    pub criteria: Vec<Criterion>,
    /// Training fraction. Defaults to 0.8 for shading and csv; example1
    /// trains on every row unless given.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = kdecorrect::conditional::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, default_value_t = kdecorrect::bandwidth::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// 2-D marginal density over the columns given by --dims.
    #[arg(long, conflicts_with = "conditional", requires = "dims")]
    pub joint: bool,
    /// Column indices or names, e.g. `0,1` or `x,y`.
    #[arg(long)]
    pub dims: Option<String>,
    /// Conditional density of the output at the inputs given by --at.
    #[arg(long, requires = "at")]
    pub conditional: bool,
    /// Input values in model column order, e.g. `10,315`.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<String>,
    /// `lo:hi` per grid axis, comma separated. Defaults to mean +- 6 std
    /// (joint) or the mixture support (conditional).
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = kdecorrect::conditional::DEFAULT_LEVEL)]
    pub level: f64,
}
