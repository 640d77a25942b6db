//! Batch front end: a JSON run configuration in, reports and plot data out.

pub mod config;
pub mod error;
pub mod run;

use std::fs;
use std::path::Path;

pub use config::{parse_config, Command, Overrides, RunConfig};
pub use error::CliError;
pub use run::{run, Summary};

/// Reads, validates and runs the configuration at `path`.
pub fn execute(command: Command, path: &Path, overrides: &Overrides) -> Result<Summary, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = parse_config(&text, base)?.finalize(command, overrides)?;
    run(&cfg)
}
