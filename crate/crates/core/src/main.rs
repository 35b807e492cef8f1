use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = agnet::cli::Cli::parse();
    match agnet::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
