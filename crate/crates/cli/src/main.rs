//! `serrodyne` command-line tool.

mod commands;
mod config;

use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliError, Opts, Settings};

#[derive(Parser)]
#[command(name = "serrodyne", version, about = "Serrodyne frequency shifter and PDH offset-lock simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metrics at one ramp frequency with the optimal drive amplitude.
    Simulate(Opts),
    /// Conversion loss and suppression over a ramp-frequency range.
    Sweep(Opts),
    /// PDH lock-point shift against a misaligned cavity.
    Pdh(Opts),
    /// Ramp generator register values, samples and spectrum.
    Rampgen(Opts),
}

type Handler = fn(&Settings) -> Result<String, CliError>;

fn execute(command: Command) -> Result<(), CliError> {
    let (opts, handler): (Opts, Handler) = match command {
        Command::Simulate(o) => (o, commands::simulate),
        Command::Sweep(o) => (o, commands::sweep),
        Command::Pdh(o) => (o, commands::pdh),
        Command::Rampgen(o) => (o, commands::rampgen),
    };
    let settings = Settings::resolve(&opts)?;
    let text = handler(&settings)?;
    match &settings.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Config(format!("out: cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
