mod args;
mod commands;
mod report;

use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn out(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = commands::ensure_threads(cli.threads)?;
    match cli.command {
        Command::Compress(a) => {
            let r = commands::cmd_compress(&a, threads)?;
            out(&r.to_string())?;
            if a.machine {
                out(&format!("{}\n", r.machine_lines()))?;
            }
        }
        Command::Decompress(a) => out(&commands::cmd_decompress(&a, threads)?.to_string())?,
        Command::Info(a) => out(&format!("{}\n", commands::cmd_info(&a)?))?,
        Command::Sweep(a) => {
            let failed = commands::cmd_sweep(&a, threads)?;
            if failed > 0 {
                bail!("{failed} sweep cells failed");
            }
        }
    }
    Ok(())
}
