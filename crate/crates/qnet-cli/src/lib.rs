//! Command-line pipeline orchestration.
//!
//! Every subcommand writes into a run directory containing a
//! `manifest.json` (full config, seeds, version) sufficient to reproduce
//! its outputs bit-exactly, plus the stage's CSV/checkpoint artifacts.

pub mod commands;
pub mod manifest;
pub mod sweep;

use clap::Parser;

pub use commands::Cli;

/// Entry point shared by `main` and the tests. Returns the process exit
/// code: 0 on success, 1 on a runtime failure, 2 on a usage error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version output through the error.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
