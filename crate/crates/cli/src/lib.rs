//! Batch front-end for hermiton: JSON scenarios in, CSV and JSON lines out.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

pub use commands::{execute, Command, Outcome};
pub use error::CliError;
pub use scenario::{Run, Scenario};

/// Output directory of one scenario: `<out>/<file stem>`.
pub fn scenario_dir(out: &Path, scenario: &Path) -> PathBuf {
    let stem = scenario.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    out.join(stem)
}

/// Loads, validates and runs one scenario file.
pub fn run_file(command: Command, path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let scenario = Scenario::load(path)?;
    let mut run = scenario.build()?;
    if let Some(seed) = seed {
        run.seed = seed;
    }
    execute(command, &run, &scenario_dir(out, path))
}
