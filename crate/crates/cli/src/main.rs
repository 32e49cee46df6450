use std::process::ExitCode;

use clap::Parser;

use ltv_es::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ltv_es::run(&cli) {
        Ok(outcome) => ExitCode::from(outcome.status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code())
        }
    }
}
