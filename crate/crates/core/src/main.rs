use clap::Parser;
use crosslab::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("wrote {} files (+ manifest.json)", outcome.manifest.files.len());
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
