//! Batch front end: CSV panel in, JSON result document and flat CSVs out.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};

pub use args::{Cli, Command};
pub use commands::{cmd_bounds, cmd_equivtest, cmd_fit, cmd_simulate, Outcome, Table};
pub use error::{CliError, CliResult};

/// Runs one command on the requested number of worker threads.
pub fn execute(cli: &Cli) -> CliResult<Outcome> {
    let run = || match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Equivtest(a) => cmd_equivtest(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match cli.workers {
        None => run(),
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(run),
    }
}

fn output_path(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Fit(a) => a.data.output.as_deref(),
        Command::Equivtest(a) => a.data.output.as_deref(),
        Command::Bounds(a) => a.data.output.as_deref(),
        Command::Simulate(a) => a.output.as_deref(),
    }
}

/// `<dir>/<stem>.<suffix>.csv` next to the document.
pub fn table_path(document: &Path, suffix: &str) -> PathBuf {
    let stem = document
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "result".into());
    document.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes the document and its tables. Returns the paths written.
pub fn write_outcome(outcome: &Outcome, document: &Path) -> CliResult<Vec<PathBuf>> {
    let write = |p: &Path, text: &str| {
        fs::write(p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    };
    write(document, &outcome.render())?;
    let mut paths = vec![document.to_path_buf()];
    for t in &outcome.tables {
        let p = table_path(document, t.suffix);
        write(&p, &t.to_csv()?)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Executes and writes. Returns what should go to stdout: the document
/// itself when no output path was given, otherwise the written paths.
pub fn run(cli: &Cli) -> CliResult<String> {
    let outcome = execute(cli)?;
    match output_path(cli) {
        None => Ok(outcome.render()),
        Some(path) => Ok(write_outcome(&outcome, path)?
            .iter()
            .map(|p| format!("{}\n", p.display()))
            .collect()),
    }
}
