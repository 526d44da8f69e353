use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = docl::cli::Cli::parse();
    match docl::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
