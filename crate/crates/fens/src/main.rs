//! CLI entry point. Exit codes: 0 success, 1 usage error, 2 data or
//! configuration error, 3 run completed with member failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fens::config::{load_config, CliOverrides, ExperimentConfig};
use fens::runner::{execute, Outcome, Stages};
use fens_core::Result;

#[derive(Parser)]
#[command(
    name = "fens",
    version,
    about = "Train homogeneous model pools and measure how ensembling shifts per-group accuracy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ablation mode list (comma separated).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<String>>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the ensemble sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the member pools and populate the prediction cache.
    Train(CommonArgs),
    /// Compute bootstrap size curves from the cache.
    Ensemble(EnsembleArgs),
    /// Compute the group report and diversity metrics from the cache.
    Metrics(CommonArgs),
    /// Run the corruption severity sweep from the cache.
    Sweep(CommonArgs),
    /// Merge per-mode CSVs into one long-format table.
    Report(CommonArgs),
    /// Train, evaluate, sweep, and report in one pass.
    Run(CommonArgs),
}

fn resolve(common: &CommonArgs, sizes: Option<Vec<usize>>) -> Result<ExperimentConfig> {
    let overrides = CliOverrides {
        seed: common.seed,
        modes: common.mode.clone(),
        out: common.out.clone(),
        sizes,
    };
    load_config(&common.config, &overrides)
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Train(common) => {
            let config = resolve(&common, None)?;
            execute(&config, Stages::train_only())
        }
        Command::Ensemble(args) => {
            let config = resolve(&args.common, args.sizes)?;
            execute(&config, Stages::curves_only())
        }
        Command::Metrics(common) => {
            let config = resolve(&common, None)?;
            execute(&config, Stages::metrics_only())
        }
        Command::Sweep(common) => {
            let config = resolve(&common, None)?;
            execute(&config, Stages::sweep_only())
        }
        Command::Report(common) => {
            let config = resolve(&common, None)?;
            execute(&config, Stages::report_only())
        }
        Command::Run(common) => {
            let config = resolve(&common, None)?;
            execute(&config, Stages::full(config.corruption_sweep))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::from(0)
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(Outcome { partial: false }) => ExitCode::from(0),
        Ok(Outcome { partial: true }) => {
            eprintln!("warning: run completed with failed members; see the manifest");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
