//! Command-line front end for `dropreg`.
//!
//! Every subcommand writes its outputs into `--out` together with a JSON
//! run manifest; `replay` re-executes a manifest and checks that the outputs
//! come back byte for byte.

pub mod args;
pub mod commands;
pub mod manifest;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use args::{Cli, Command};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status when a check or replay fails.
pub const EXIT_VERIFY: i32 = 1;
/// Exit status for bad flags or configuration.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] dropreg::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(
                dropreg::Error::Config(_)
                | dropreg::Error::Domain { .. }
                | dropreg::Error::Unsupported(_)
                | dropreg::Error::Dataset(_)
                | dropreg::Error::Dimension { .. },
            ) => EXIT_USAGE,
            _ => EXIT_VERIFY,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let recorded = manifest::recorded_args(&argv[1..]);
    match commands::execute(&cli, &recorded) {
        Ok(report) => {
            if !report.is_empty() {
                println!("{report}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
