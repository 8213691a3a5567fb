//! Command-line front end: batch simulation, condition studies, log
//! analysis and the live gateway.

pub mod analyze;
pub mod args;
pub mod condition;
pub mod output;
pub mod simulate;

use std::fmt;
use std::process::ExitCode;

use rehab_core::Error as CoreError;

pub use args::{Cli, Command};

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 2,
    Data = 3,
    Runtime = 4,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self { exit: Exit::Usage, source: anyhow::anyhow!("{msg}") }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self { exit: Exit::Data, source: e.into() }
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self { exit: Exit::Runtime, source: e.into() }
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self { exit: self.exit, source: self.source.context(ctx) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}

/// Parameter mistakes are usage errors, unreadable inputs are data errors,
/// everything else is a runtime failure.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let exit = match e {
            CoreError::InvalidParameter(_) | CoreError::UnknownSchedule(_) => Exit::Usage,
            CoreError::CorruptLog(_) | CoreError::VersionMismatch { .. } | CoreError::Input(_) | CoreError::Io(_) => {
                Exit::Data
            }
            _ => Exit::Runtime,
        };
        Self { exit, source: e.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs a parsed command line, writing the human-readable report to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a, out),
        Command::Condition(a) => condition::run(&a, out),
        Command::Analyze(a) => analyze::run(&a, out),
        Command::Serve(a) => args::serve(&a),
    }
}
