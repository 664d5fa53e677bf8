//! Command-line front end: `preprocess`, `roi`, `explain` and `compare`.
//!
//! Exit codes: 0 success, 2 input error, 3 degenerate data, 4 predictor or
//! transport failure, 5 internal error.

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

pub mod args;
pub mod commands;
pub mod config;
pub mod spec;

pub use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_PREDICTOR: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &roixai::Error) -> i32 {
    use roixai::Error as E;
    match e {
        E::DimensionMismatch(_)
        | E::OutOfRange(_)
        | E::InvalidConfig(_)
        | E::TileTooLarge { .. }
        | E::PatchTooLarge { .. }
        | E::Codec(_)
        | E::Io(_) => EXIT_INPUT,
        E::NoForeground | E::DegenerateImportance | E::SingularFit => EXIT_DEGENERATE,
        E::Predictor(_) | E::Transport(_) | E::Protocol(_) => EXIT_PREDICTOR,
    }
}

impl From<roixai::Error> for CliError {
    fn from(e: roixai::Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match parse(&args) {
        Ok(cli) => match commands::dispatch(cli) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                e.code
            }
        },
        Err(ParseOutcome::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(ParseOutcome::Cli(e)) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

enum ParseOutcome {
    Clap(clap::Error),
    Cli(CliError),
}

fn parse(args: &[OsString]) -> Result<Cli, ParseOutcome> {
    let mut cmd = Cli::command();
    if let Some(path) = config::locate(args) {
        let pairs = config::load(&path).map_err(ParseOutcome::Cli)?;
        cmd = config::apply(cmd, &pairs).map_err(ParseOutcome::Cli)?;
    }
    let matches = cmd.try_get_matches_from(args).map_err(ParseOutcome::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseOutcome::Clap)
}
