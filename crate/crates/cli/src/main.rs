use std::process::ExitCode;

use clap::Parser;
use roadsense_cli::commands::{self, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roadsense: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
