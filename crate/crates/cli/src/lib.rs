//! The `afe` command-line tool: dataset ingestion and synthesis, training,
//! evaluation, feature-image export, ablation and benchmarking.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3
//! configuration mismatch. `AFE_SEED` supplies the seed wherever `--seed`
//! is accepted but not given.

pub mod args;
pub mod commands;
pub mod error;
pub mod ppm;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{CliConfig, Command};
pub use error::{CliError, CliResult, ExitKind};

/// Runs one parsed command and returns its stdout text.
pub fn execute(config: &CliConfig) -> CliResult<String> {
    match &config.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Encode(a) => commands::encode(a),
        Command::Bench(a) => commands::bench(a).map(|(text, _)| text),
        Command::Ablate(a) => commands::ablate_cmd(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match CliConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => ExitKind::Usage as i32,
            };
        }
    };
    match execute(&config) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
