//! Command-line front end for `sqdkit`.
//!
//! Every subcommand writes a list of flat records (JSON array or CSV). Each
//! record carries the seed, the crate version and a hash of the resolved
//! configuration plus FCIDUMP contents, so rerunning with the same settings
//! reproduces it exactly.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;

use clap::Parser;

pub use commands::{run, Body, Outcome, Record};
pub use config::{Cli, Command, Format, RunConfig, TrialState};

/// Exit status for bad input (missing file, parse failure, invalid flag).
pub const EXIT_INPUT: i32 = 2;
/// Exit status when an iterative solver stopped before converging. The
/// records are still written.
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Library(#[from] sqdkit::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sqdkit::Error as E;
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Library(
                E::Parse { .. }
                | E::Header(_)
                | E::Integrals(_)
                | E::InvalidSector { .. }
                | E::InvalidArgument(_)
                | E::TooLarge { .. },
            ) => EXIT_INPUT,
            _ => 1,
        }
    }
}

/// Parses `args`, runs the command and writes the records to `--out` or
/// `stdout`. A short human-readable summary goes to `stderr`. Returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = RunConfig::from_cli(cli)?;
    let outcome = run(&cfg)?;
    let text = output::render(&outcome.records, cfg.format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?,
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(e.to_string()))?,
    }
    for r in &outcome.records {
        let _ = writeln!(stderr, "{}", output::summary(r));
    }
    if outcome.converged {
        Ok(0)
    } else {
        let _ = writeln!(stderr, "warning: a solver did not converge");
        Ok(EXIT_NOT_CONVERGED)
    }
}
