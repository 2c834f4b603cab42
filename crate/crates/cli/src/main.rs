use std::process::ExitCode;

use clap::Parser;
use hmc_tune::{execute, Args};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hmc-tune {}: {e}", args.subcommand);
            ExitCode::from(e.exit_code())
        }
    }
}
