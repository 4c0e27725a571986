use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cke::cli_io::{run_command, Command};

/// Continuity-method solver for coupled Kähler-Einstein equations.
#[derive(Parser)]
#[command(name = "cke", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the continuity path; writes path.csv and solution.txt.
    Solve { config: PathBuf },
    /// Solve, then check the spectrum, uniqueness, and Weitzenbock margins.
    Verify { config: PathBuf },
    /// Write a manufactured background and its exact solution.
    Manufacture { config: PathBuf },
    /// Print the Green constant of the configured geometry.
    Green { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, config) = match cli.command {
        Sub::Solve { config } => (Command::Solve, config),
        Sub::Verify { config } => (Command::Verify, config),
        Sub::Manufacture { config } => (Command::Manufacture, config),
        Sub::Green { config } => (Command::Green, config),
    };
    ExitCode::from(run_command(command, &config) as u8)
}
