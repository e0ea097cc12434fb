//! Command line front end: fit tensor rings to black-box oracles, score rings
//! on held-out points and print rank-one diagnostics.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, OracleName};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "trals",
    version,
    about = "Tensor ring decomposition from black-box evaluations"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports, rings and skeleton dumps.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit rings for every repeat and report errors and oracle calls.
    Decompose,
    /// Relative error of a ring file against an oracle.
    Evaluate {
        /// Ring file to score.
        #[arg(long)]
        ring: PathBuf,
        /// Oracle to score against when no configuration is given.
        #[arg(long, value_parser = parse_oracle)]
        oracle: Option<OracleName>,
        /// Number of uniform random points.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Rank-one diagnostics over every rotation of the four-region split.
    Diagnose,
}

fn parse_oracle(s: &str) -> Result<OracleName, String> {
    match s {
        "toy" => Ok(OracleName::Toy),
        "ising" => Ok(OracleName::Ising),
        "pde" => Ok(OracleName::Pde),
        "synthetic" => Ok(OracleName::Synthetic),
        _ => Err(format!(
            "unknown oracle {s:?}, expected toy, ising, pde or synthetic"
        )),
    }
}

fn load(cli: &Cli) -> Result<Config, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = Config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let output = match &cli.command {
        Command::Decompose => commands::decompose(&load(cli)?)?,
        Command::Diagnose => commands::diagnose(&load(cli)?)?,
        Command::Evaluate {
            ring,
            oracle,
            count,
        } => {
            let cfg = match &cli.config {
                Some(_) => Some(load(cli)?),
                None => None,
            };
            commands::evaluate(cfg.as_ref(), *oracle, ring, *count, cli.seed)?
        }
    };
    print!("{}", output.stdout);
    if let Some(dir) = &cli.out {
        output.write_files(dir)?;
        log::info!("wrote {} files to {}", output.files.len(), dir.display());
    }
    match output.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
