//! Command-line front end for `kdecorrect`: fit and save models, correct
//! CSV files, run benchmark grids and export density grids.
//!
//! Exit status is 0 on success, 2 for usage errors, 3 for data errors and 4
//! for numerical failures.

pub mod args;
pub mod bench;
pub mod density;
pub mod error;
pub mod fit;
pub mod model;
pub mod output;
pub mod predict;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Environment variable capping the worker thread count (`0` or unset = all cores).
pub const THREADS_ENV: &str = "KDECORRECT_THREADS";

pub fn configure_threads() -> CliResult<()> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Bench(s) => bench::run(s),
        Command::Density(a) => density::run(a),
    }
}
