use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cellpp::cli::Cli::parse();
    match cellpp::cli::run_parsed(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
