//! Binary entry point: parse flags, dispatch, and map outcomes to exit
//! codes (0 feasible, 1 usage or input error, 2 predicted OOM or offload
//! verdict).

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use memplan::args::{Cli, Command};
use memplan::commands::{cmd_estimate, cmd_plan, cmd_sweep};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
