use std::process::ExitCode;

use adaflow_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outputs) => {
            for msg in &outputs.notices {
                eprintln!("{msg}");
            }
            if let Some(out) = &cli.out {
                for (name, _) in &outputs.files {
                    println!("{}", out.join(name).display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("adaflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
