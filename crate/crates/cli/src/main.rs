use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::Parser;
use ep_cli::{execute, Cli, CliError};

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let out = execute(cli).with_context(|| format!("`{}` failed", cli.command.name()))?;
    for line in &out.summary {
        eprintln!("{line}");
    }
    for p in &out.written {
        eprintln!("wrote {}", p.display());
    }
    if let Some(f) = &out.failed_suites {
        eprintln!("error: {}", CliError::Suite(f.clone()));
    }
    Ok(ExitCode::from(out.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
