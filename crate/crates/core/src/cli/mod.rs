//! Command-line front end: configuration loading, dispatch and output.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Format, Outcome};
pub use config::Config;

use crate::error::{Error, Result};

/// Exit code for a configuration, input or I/O error.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when a solver stopped before meeting its tolerance.
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mbpre", version, about = "Growth, optimal strategies and genealogies of branching populations in random environments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output files; without it the primary output goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal strategy without or with sensing.
    Optimize,
    /// Optimal rates over a grid of one environment parameter.
    Scan {
        /// Parameter to vary: q, q1, q2, nu1, rho, chi or sigma2_sq. Defaults to the configured one.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values, overriding the configured grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Simulates replicate populations.
    Simulate,
    /// Growth rate of the configured strategy.
    Growth,
    /// Trait law along the ancestral lineage.
    Genealogy,
    /// Closed forms for the Gaussian model.
    Gaussian {
        #[command(subcommand)]
        what: GaussianCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum GaussianCommand {
    /// Optimal strategies and their rates.
    Optimal,
    /// Gains from diversification and from sensing.
    Gain,
}

/// Runs a parsed command line against a loaded configuration.
pub fn execute(cli: &Cli, cfg: &Config) -> Result<Outcome> {
    let f = cli.format;
    match &cli.command {
        Command::Optimize => commands::cmd_optimize(cfg, f),
        Command::Scan { param, values } => commands::cmd_scan(cfg, param.as_deref(), values.as_deref(), f),
        Command::Simulate => commands::cmd_simulate(cfg, cli.seed, f),
        Command::Growth => commands::cmd_growth(cfg, cli.seed, f),
        Command::Genealogy => commands::cmd_genealogy(cfg, cli.seed, f),
        Command::Gaussian { what: GaussianCommand::Optimal } => commands::cmd_gaussian_optimal(cfg, f),
        Command::Gaussian { what: GaussianCommand::Gain } => commands::cmd_gaussian_gain(cfg, f),
    }
}

fn extension(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

/// Prints the primary output, or writes every output file under `--out`.
pub fn emit(outcome: &Outcome, out: Option<&PathBuf>) -> Result<()> {
    match out {
        None => print!("{}", outcome.primary),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let name = format!("{}.{}", outcome.name, extension(outcome.format));
            std::fs::write(dir.join(name), &outcome.primary)?;
            for (name, body) in &outcome.extra {
                std::fs::write(dir.join(name), body)?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = Config::from_path(path)?;
    let outcome = execute(cli, &cfg)?;
    emit(&outcome, cli.out.as_ref())?;
    Ok(outcome.converged)
}

/// Entry point of the `mbpre` binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("mbpre: solver did not converge");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("mbpre: {e}");
            EXIT_ERROR
        }
    }
}
