//! Artifact staging and atomic emission.
//!
//! Tasks produce artifacts in memory; this module stamps each one with a
//! provenance block (toolkit version, task, master seed, configuration
//! hash, and the full effective configuration), then writes it atomically
//! (temp file + rename) so readers never observe a half-written file.
//! Nothing time-dependent is ever written: re-running an identical
//! configuration reproduces every byte.
//!
//! When a task fails after producing partial results, those artifacts are
//! diverted to a `quarantine/` subdirectory instead of the output
//! directory proper. Non-convergence is the exception: its artifacts are
//! complete reports (they say "not converged"), so they land normally and
//! only the exit code signals the condition.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

/// One output file, staged in memory.
#[derive(Debug, Clone)]
pub struct Artifact {
    /// File name inside the output directory, e.g. `params.csv`.
    pub filename: String,
    /// Extra `# key: value` header lines after the provenance block.
    pub headers: Vec<(String, String)>,
    /// Everything after the header block.
    pub body: String,
}

impl Artifact {
    pub fn new(filename: impl Into<String>, body: String) -> Self {
        Artifact { filename: filename.into(), headers: Vec::new(), body }
    }

    pub fn with_header(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((key.into(), value.into()));
        self
    }

    /// The complete file contents for `config`.
    pub fn render(&self, config: &RunConfig) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# generated_by: rydex {}\n# task: {}\n",
            env!("CARGO_PKG_VERSION"),
            config.task()
        ));
        out.push_str(&format!("# seed: {}\n", config.str("seed")));
        out.push_str(&format!("# config_hash: {}\n", config.hash()));
        for line in config.echo_lines() {
            out.push_str(&format!("# config: {line}\n"));
        }
        for (key, value) in &self.headers {
            out.push_str(&format!("# {key}: {value}\n"));
        }
        out.push_str(&self.body);
        out
    }
}

/// What a task produced: artifacts, and the failure that stopped it (if
/// any). Artifacts are present even on failure when partial results exist.
#[derive(Debug)]
pub struct TaskOutcome {
    pub artifacts: Vec<Artifact>,
    pub failure: Option<CliError>,
}

impl TaskOutcome {
    pub fn success(artifacts: Vec<Artifact>) -> Self {
        TaskOutcome { artifacts, failure: None }
    }

    pub fn failed(artifacts: Vec<Artifact>, failure: CliError) -> Self {
        TaskOutcome { artifacts, failure: Some(failure) }
    }
}

/// Writes one rendered artifact atomically into `dir`.
fn write_atomic(dir: &Path, filename: &str, contents: &str) -> Result<PathBuf, CliError> {
    let final_path = dir.join(filename);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(&final_path, e))?;
    tmp.persist(&final_path)
        .map_err(|e| CliError::io(&final_path, e.error))?;
    Ok(final_path)
}

/// Writes every artifact of `outcome`, routing partial results of a failed
/// task into `quarantine/`. Returns the paths written.
pub fn write_outcome(
    outcome: &TaskOutcome,
    config: &RunConfig,
) -> Result<Vec<PathBuf>, CliError> {
    let out_dir = config.out_dir();
    let quarantined = matches!(
        outcome.failure,
        Some(CliError::Usage(_)) | Some(CliError::Data(_))
    );
    let dir = if quarantined { out_dir.join("quarantine") } else { out_dir };
    if outcome.artifacts.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut written = Vec::with_capacity(outcome.artifacts.len());
    for artifact in &outcome.artifacts {
        written.push(write_atomic(&dir, &artifact.filename, &artifact.render(config))?);
    }
    Ok(written)
}
