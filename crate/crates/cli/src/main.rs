//! `deconv`: forward data generation, deconvolution runs and step sweeps.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_seeds, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "deconv", version, about = "Stable deconvolution of Volterra convolution equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write clean data f.csv and noisy f_delta_<seed>.csv.
    Forward(Common),
    /// Reconstruct u for each seed and write solutions, report.csv and solution.svg.
    Solve(Common),
    /// Deconvolution error against the step h, written to sweep.csv and sweep.svg.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated steps.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        h_list: Vec<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides `seeds` in the config.
    #[arg(long)]
    seeds: Option<String>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DECONV_THREADS") else {
        return Ok(());
    };
    let n = v
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DECONV_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Forward(common) => commands::forward(&load(&common)?),
        Command::Solve(common) => commands::solve(&load(&common)?),
        Command::Sweep { common, h_list } => commands::sweep(&load(&common)?, &h_list),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deconv: {e}");
            e.exit_code()
        }
    }
}
