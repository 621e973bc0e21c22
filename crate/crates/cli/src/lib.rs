//! Library behind the `grw` binary: config parsing, the four commands and
//! report rendering.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run_anomaly, run_collapse, run_pointer, run_way};
pub use config::{parse_j_list, Command, Format, Origin, Param, RunConfig, DEFAULT_SEED};
pub use output::{
    add_log10_twins, write_atomic, Report, Table, SCHEMA_VERSION, TWIN_MAX, TWIN_MIN,
};

/// Exit status for a run whose computations all finished.
pub const EXIT_COMPLETE: i32 = 0;
/// Exit status when an error stopped the run.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when a report was written but some computation is missing.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {msg}")]
    Config { origin: Origin, msg: String },
    #[error("parameter `{key}` ({origin}): {msg}")]
    Param {
        key: String,
        origin: Origin,
        msg: String,
    },
    #[error(transparent)]
    Marbles(#[from] grw_core::marbles::MarblesError),
    #[error(transparent)]
    Pointer(#[from] grw_core::pointer::PointerError),
    #[error(transparent)]
    Way(#[from] grw_core::way::WayError),
    #[error(transparent)]
    Qmath(#[from] grw_core::qmath::QmathError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::Anomaly => run_anomaly(cfg),
        Command::Collapse => run_collapse(cfg),
        Command::Pointer => run_pointer(cfg),
        Command::Way => run_way(cfg),
    }
}

/// Runs `cfg`, writes the rendered report to its output path (or returns
/// the bytes when there is none) and gives the exit status.
pub fn execute(cfg: &RunConfig) -> Result<(Vec<u8>, i32), CliError> {
    let report = run(cfg)?;
    let bytes = report.render(cfg)?;
    if let Some(path) = &cfg.output_path {
        write_atomic(path, &bytes)?;
    }
    let code = if report.complete() {
        EXIT_COMPLETE
    } else {
        EXIT_PARTIAL
    };
    Ok((bytes, code))
}

/// Reads a config file for `command` (or the command it names).
pub fn load_config(path: &PathBuf, command: Option<Command>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    RunConfig::from_text(&text, command)
}
