use std::process::ExitCode;

use clap::Parser;
use steerlsh_cli::cli::{run, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error[{}]: {}", err.code, err.message);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
