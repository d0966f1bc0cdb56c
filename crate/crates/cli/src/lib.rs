//! Command-line front end for the monogram pipeline.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into an
//! output directory and refuses to overwrite files without `--force`.
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 data, 4 training
//! divergence.

pub mod args;
mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command, ReportCommand};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_USAGE};

/// Environment variable holding the log filter (`error` .. `trace`).
pub const LOG_ENV: &str = "MONOGRAM_LOG";

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let force = cli.force;
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, force),
        Command::TrainAe(a) => commands::train_ae(a, cfg, force),
        Command::Encode(a) => commands::encode(a, cfg, force),
        Command::TrainFusion(a) => commands::train_fusion_cmd(a, cfg, force),
        Command::Index(a) => commands::index(a, cfg, force),
        Command::Search(a) => {
            let mut out = commands::stdout_writer();
            commands::search(a, cfg, &mut out)?;
            out.flush().map_err(|e| CliError::io("<stdout>", e))
        }
        Command::Evaluate(a) => commands::evaluate(a, cfg, force),
        Command::Report(ReportCommand::Xor(a)) => commands::report_xor(a, force),
        Command::Report(ReportCommand::Pca(a)) => commands::report_pca(a, force),
        Command::Report(ReportCommand::Reconstruction(a)) => commands::report_reconstruction(a, cfg, force),
    }
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
