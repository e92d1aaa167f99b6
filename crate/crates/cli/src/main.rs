use std::process::ExitCode;

use clap::Parser;
use nilm_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nilm {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
