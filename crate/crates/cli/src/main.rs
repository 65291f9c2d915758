//! `pairprobit`: simulate ordinal data, fit the pairwise ordered probit
//! model, run replicated studies and benchmark gradients.

mod commands;
mod error;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pairprobit", version, about = "Pairwise likelihood estimation for ordered probit models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a sparse correlation matrix and thresholds, then sample a dataset.
    Simulate(commands::SimulateArgs),
    /// Fit a dataset and report estimates, standard errors and intervals.
    Fit(commands::FitArgs),
    /// Run a replicated simulation study from a TOML configuration.
    Study(commands::StudyArgs),
    /// Time the analytic score against central finite differences.
    BenchGrad(commands::BenchArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Sidecar manifest, or a report embedding one.
    manifest: PathBuf,
}

fn dispatch(command: &Command, argv: &[String]) -> CliResult<()> {
    match command {
        Command::Simulate(a) => commands::simulate(a, argv),
        Command::Fit(a) => commands::fit(a, argv),
        Command::Study(a) => commands::study(a, argv),
        Command::BenchGrad(a) => commands::bench_grad(a, argv),
        Command::Replay(a) => {
            let manifest = manifest::load_manifest(&a.manifest)?;
            let cli = parse(&manifest.argv)?;
            if matches!(cli.command, Command::Replay(_)) {
                return Err(CliError::usage("a manifest cannot record a replay"));
            }
            log::info!("replaying `{}`", manifest.argv.join(" "));
            dispatch(&cli.command, &manifest.argv)
        }
    }
}

fn parse(args: &[String]) -> CliResult<Cli> {
    let full = std::iter::once("pairprobit".to_string()).chain(args.iter().cloned());
    Cli::try_parse_from(full).map_err(|e| CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
