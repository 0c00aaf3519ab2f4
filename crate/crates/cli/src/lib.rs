//! Command-line layer of the mcids toolkit, usable in-process through [`run_args`].

mod args;
mod commands;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use mcids::Error;

pub use args::Cli;

/// Process exit code for an error: 3 numeric divergence, 2 bad input or
/// configuration, 1 anything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericDivergence { .. } => 3,
        e if e.is_input_error() => 2,
        _ => 1,
    }
}

/// Runs a parsed command on a pool of `cli.threads` workers and writes its
/// JSON summary to `out`. Errors are printed to stderr; the exit code is returned.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> u8 {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    let result = pool.install(|| commands::run(cli)).and_then(|summary| {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        writeln!(out, "{text}").map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (program name first) and executes the command. Usage
/// errors print to stderr and give 2.
pub fn run_args<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, out),
        Err(e) => {
            let _ = e.print();
            e.exit_code() as u8
        }
    }
}
