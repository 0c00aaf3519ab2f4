//! `mcids` command-line tool. Logs go to stderr, summaries to stdout as JSON.

use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;
use mcids_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    ExitCode::from(execute(&cli, &mut std::io::stdout().lock()))
}
