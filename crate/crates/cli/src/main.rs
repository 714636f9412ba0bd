//! `hte`: simulate data, run estimators, benchmark them and check the theory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration. Exit code 1.
    Config(String),
    /// Failure while sampling, estimating or writing output. Exit code 2.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hte",
    version,
    about = "Heterogeneous treatment effect estimators and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample one data set from a scenario and write it as CSV.
    Simulate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run estimators on a data set file over a query grid.
    Estimate {
        /// Dataset CSV with columns group, x_1..x_d, y.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Noise level used by the tuning rules when no scenario file is given.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        estimators: Option<String>,
        /// Query points per axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replicated comparison of estimators on one scenario.
    Benchmark {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// RMSE over a range of sample sizes and the fitted log-log slope.
    Rates {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Comma-separated sample sizes; at least four spanning a decade.
        #[arg(long, default_value = "250,500,1000,2000,4000")]
        ns: String,
        #[arg(long)]
        reps: Option<usize>,
        /// Single estimator to sweep.
        #[arg(long)]
        estimators: Option<String>,
        /// Target slope; derived from the reference rates when absent.
        #[arg(long, allow_hyphen_values = true)]
        exponent: Option<f64>,
        #[arg(long, default_value_t = 0.15)]
        tolerance: f64,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Numerical checks of the supporting inequalities and lower-bound instances.
    CheckTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { experiment, out } => commands::simulate(&experiment, &out),
        Command::Estimate {
            data,
            experiment,
            sigma,
            estimators,
            grid,
            out,
        } => commands::estimate(&data, &experiment, sigma, estimators.as_deref(), grid, &out),
        Command::Benchmark {
            experiment,
            reps,
            estimators,
            grid,
            out,
        } => commands::benchmark(&experiment, reps, estimators.as_deref(), grid, &out),
        Command::Rates {
            experiment,
            ns,
            reps,
            estimators,
            exponent,
            tolerance,
            grid,
            out,
        } => commands::rates(
            &experiment,
            &ns,
            reps,
            estimators.as_deref(),
            exponent,
            tolerance,
            grid,
            &out,
        ),
        Command::CheckTheory { seed, out } => commands::check_theory(seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
