//! `specthresh` command-line front end.
//!
//! Errors are printed as one line on stderr:
//! `error kind=<usage|input|numerical> code=<n> message="..."`.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use specthresh::ErrorKind;

use crate::args::{Cli, Command};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={kind} code={code} message={flat:?}");
    ExitCode::from(code)
}

fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err("--threads must be at least 1".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    fail("usage", EXIT_USAGE, first.trim_start_matches("error: "))
                }
            };
        }
    };
    if let Err(msg) = configure_threads(cli.threads) {
        return fail("usage", EXIT_USAGE, &msg);
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::FigureData(a) => commands::figure_data(a),
        Command::Spectrum(a) => commands::spectrum(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.kind() {
            ErrorKind::Usage => fail("usage", EXIT_USAGE, &e.to_string()),
            ErrorKind::Input => fail("input", EXIT_INPUT, &e.to_string()),
            ErrorKind::Numerical => fail("numerical", EXIT_NUMERICAL, &e.to_string()),
        },
    }
}
