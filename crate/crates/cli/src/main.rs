use clap::Parser;
use cstarmod_cli::{execute, emit, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            if let Err(e) = emit(&cli, &outcome) {
                eprintln!("error: {e}");
                std::process::exit(2);
            }
            std::process::exit(outcome.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
