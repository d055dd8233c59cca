//! `chaoscorr`: simulate chaotic light, detect it on three channels, count
//! coincidences and compare with the closed-form correlations.

mod args;
mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}
