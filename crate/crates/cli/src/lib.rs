//! Batch command-line front end for the spectroscopy toolkit.
//!
//! One task per invocation: `simulate`, `fit`, `select-model`, `elliott`,
//! `trends`, or `invert-temp`. Every task reads a flat key=value
//! configuration (defaults < `--config` file < flags), writes its
//! artifacts atomically into the output directory, and stamps each file
//! with the toolkit version, master seed, and a hash of the effective
//! configuration — identical configurations reproduce identical bytes.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 non-convergence.

pub mod artifact;
pub mod config;
pub mod error;
pub mod spectrum;
pub mod table;
pub mod tasks;

use std::path::Path;

use config::RunConfig;
use error::CliError;

/// Builds the effective configuration, runs the task, and writes its
/// artifacts (to `quarantine/` when the task failed mid-way).
pub fn run_task(
    task: &str,
    config_path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<(), CliError> {
    let config = RunConfig::build(task, config_path, overrides)?;
    let outcome = tasks::execute(&config);
    let written = artifact::write_outcome(&outcome, &config);
    match outcome.failure {
        Some(failure) => {
            // Recording a failed run is best effort; the primary failure
            // must not be masked by a secondary write error.
            if let Err(io) = written {
                eprintln!("rydex: could not record the failed run: {io}");
            }
            Err(failure)
        }
        None => written.map(|_| ()),
    }
}
