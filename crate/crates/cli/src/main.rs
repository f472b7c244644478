use std::process::ExitCode;

use clap::Parser;
use robagg_cli::{init_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(&cli) {
        Ok(out) => {
            println!("{}", out.stdout.trim_end());
            for n in &out.notes {
                eprintln!("{n}");
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
