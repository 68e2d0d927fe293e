//! Command-line harness: run or validate JSON-configured scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use porosplit::scenario::{run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "porosplit",
    version,
    about = "Mixed FEM solver for fully dynamic poroelasticity with iteratively coupled splitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV, summary and manifest artifacts.
    Run {
        /// Scenario description (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a scenario description without running it.
    Validate {
        /// Scenario description (JSON).
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let config = match ScenarioConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_scenario(&config, &out) {
                Ok(outcome) => {
                    for (name, ok) in &outcome.gates {
                        println!("gate {name}: {}", if *ok { "pass" } else { "fail" });
                    }
                    for file in &outcome.files {
                        println!("wrote {}", file.display());
                    }
                    if outcome.passed {
                        println!("PASS");
                        ExitCode::SUCCESS
                    } else {
                        println!("FAIL");
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match ScenarioConfig::from_file(&config) {
            Ok(_) => {
                println!("ok: configuration is valid");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
