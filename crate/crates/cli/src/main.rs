use std::process::ExitCode;

use clap::Parser;
use uq_cli::app::{run, seed_from_env, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = seed_from_env();
    match run(&cli, env.as_deref()) {
        Ok(Outcome::Run(manifest)) => {
            for out in &manifest.outputs {
                println!("{}  {}", out.sha256, out.path);
            }
            ExitCode::SUCCESS
        }
        Ok(Outcome::Report(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("uq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
