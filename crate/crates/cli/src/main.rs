//! Experiment front end: `solve`, `sweep`, and `validate` over a TOML
//! config, with deterministic seeded output files.
//!
//! Exit codes: 0 success, 1 run or validation failure, 2 config error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BuiltExperiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "speclease",
    version,
    about = "Two-stage sub-channel leasing: reservation planner, experiment sweeps, self-checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the advance-reservation plan
    Solve(CommonArgs),
    /// Run the configured grid sweep and write sweep.csv
    Sweep(SweepArgs),
    /// Run the cross-module consistency checks
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML)
    config: PathBuf,
    /// Override run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.workers (0 = all cores); results are identical at any
    /// worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override run.out_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Reuse grid points already complete in sweep.csv
    #[arg(long)]
    resume: bool,
}

struct Prepared {
    experiment: BuiltExperiment,
    seed: u64,
    out_dir: PathBuf,
}

fn prepare(args: &CommonArgs) -> anyhow::Result<Prepared> {
    let config = ExperimentConfig::load(&args.config)?;
    let experiment = config.build()?;
    let seed = args.seed.unwrap_or(config.run.seed);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.run.out_dir));
    let workers = args.workers.unwrap_or(config.run.workers);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .ok();
    Ok(Prepared {
        experiment,
        seed,
        out_dir,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Solve(args) | Command::Validate(args) => args,
        Command::Sweep(args) => &args.common,
    };

    let prepared = match prepare(common) {
        Ok(p) => p,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(2);
        }
    };
    if matches!(cli.command, Command::Sweep(_)) && prepared.experiment.grid.is_none() {
        eprintln!("config error: sweep needs a [grid] section");
        return ExitCode::from(2);
    }

    let outcome = match &cli.command {
        Command::Solve(_) => {
            commands::cmd_solve(&prepared.experiment, prepared.seed, &prepared.out_dir)
                .map(|()| true)
        }
        Command::Sweep(args) => commands::cmd_sweep(
            &prepared.experiment,
            prepared.seed,
            &prepared.out_dir,
            args.resume,
        )
        .map(|()| true),
        Command::Validate(_) => {
            commands::cmd_validate(&prepared.experiment, prepared.seed, &prepared.out_dir)
        }
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
