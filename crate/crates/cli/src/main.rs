//! The `rydex` binary: argument parsing and exit-code mapping.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rydex_cli::error::CliError;

#[derive(Parser)]
#[command(
    name = "rydex",
    version,
    about = "Batch analysis of Rydberg-exciton absorption spectra",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Flat key=value configuration file ('#' starts a comment).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed for every random stream (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Directory that receives the artifacts (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Input data file (overrides the config).
    #[arg(long, global = true, value_name = "FILE")]
    input: Option<PathBuf>,

    /// Override any config key, e.g. --set peaks=4 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    task: Task,
}

#[derive(Subcommand)]
enum Task {
    /// Synthesize a spectrum or a thermal center table.
    Simulate,
    /// Least-squares fit of a peak model to a spectrum.
    Fit,
    /// Compare candidate peak counts by minimum free energy.
    SelectModel,
    /// Fit the thermal-shift law to a center table.
    Elliott,
    /// Fit scaling laws (power law, linewidth law) across the series.
    Trends,
    /// Invert the thermal-shift law: resonance energy to temperature.
    InvertTemp,
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Fit => "fit",
            Task::SelectModel => "select-model",
            Task::Elliott => "elliott",
            Task::Trends => "trends",
            Task::InvertTemp => "invert-temp",
        }
    }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for entry in &cli.set {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects KEY=VALUE, got '{entry}'"))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    // Dedicated flags win over --set.
    if let Some(seed) = cli.seed {
        pairs.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(dir) = &cli.out_dir {
        pairs.push(("out_dir".to_string(), dir.display().to_string()));
    }
    if let Some(input) = &cli.input {
        pairs.push(("input".to_string(), input.display().to_string()));
    }
    Ok(pairs)
}

fn main() -> ExitCode {
    // clap exits with 2 on bad arguments and 0 for --help/--version.
    let cli = Cli::parse();
    let run = overrides(&cli).and_then(|pairs| {
        rydex_cli::run_task(cli.task.name(), cli.config.as_deref(), &pairs)
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rydex {}: {err}", cli.task.name());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
