//! Command-line front end: `nwidth gen | widths | spectrum | dim | krr | verify`.
//!
//! Every file written starts with `#` comment lines holding the tool version,
//! the command line and the fully resolved configuration as JSON. JSON
//! reports carry the same information in `version` and `config` fields.

mod args;
mod commands;
mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

pub use args::Cli;

/// Exit status of a finished run.
pub const EXIT_OK: u8 = 0;
/// Verification failure or a numerical/IO error.
pub const EXIT_FAILURE: u8 = 1;
/// Bad command line or parameter out of range.
pub const EXIT_USAGE: u8 = 2;

/// Parses `argv` (including the program name) and executes it.
pub fn run<I, T>(argv: I) -> u8
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
    init_logging(cli.verbose);
    configure_threads(cli.threads);
    let command_line: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::execute(&cli, &command_line) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                nwidth::Error::InvalidParameter { .. } | nwidth::Error::KernelSpecParse(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

pub fn main_exit() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Caps the global pool; a pool that already exists (repeated in-process
/// runs) is left alone.
fn configure_threads(threads: usize) {
    if rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_err()
    {
        log::debug!("thread pool already initialised");
    }
}
