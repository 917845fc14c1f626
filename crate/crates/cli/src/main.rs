//! Command-line front end for the `dualitylab` solvers and checks.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use commands::{run, Command};
use config::{Flags, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "dualitylab", version, about = "Utility maximisation and its dual on finite scenario trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run(cli.command, &cfg))?;
    for line in &outcome.lines {
        println!("{line}");
    }
    if !outcome.passed {
        let msg = "one or more checks exceeded tolerance";
        if cfg.strict {
            return Err(CliError::Check(msg.into()));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dualitylab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
