//! `trends`: scaling-law fits across the resonance series.
//!
//! `trend = power_law` regresses `ln y` on `ln x` (optionally with the
//! exponent held fixed) and reports the exponent with its standard error
//! and a ±3σ band. `trend = linewidth` fits the linewidth law
//! `Γ(n) = α·(n²−1)/n⁵ + β`. Input is a two-column table, or one of the
//! built-in reference tables (`table = strengths` for oscillator strengths
//! against n, `table = widths_nm` for linewidths against n).

use rydex_core::lsq::{fit_linewidth_law, fit_power_law};
use rydex_core::{demo, model::scaling::shape_factor};

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{cell_to_u32, Table};
use crate::tasks::{convergence_failure, convergence_log, lm_options, params_table, provenance};

/// The (x, y) samples plus a description of where they came from.
fn load_samples(config: &RunConfig) -> Result<(Vec<(f64, f64)>, String), CliError> {
    match config.str("table") {
        "" => {
            let path = config.required_input()?;
            let table = Table::parse(&path)?;
            if table.columns.len() < 2 || table.names.is_some() && table.columns.len() < 3 {
                return Err(CliError::Data(format!(
                    "{}: a trend table needs two numeric columns",
                    path.display()
                )));
            }
            let samples = table.rows.iter().map(|r| (r[0], r[1])).collect();
            Ok((samples, format!("input table {}", path.display())))
        }
        "strengths" => {
            let samples = demo::PRINCIPAL
                .iter()
                .zip(demo::STRENGTHS.iter())
                .map(|(&n, &f)| (f64::from(n), f))
                .collect();
            Ok((samples, "built-in oscillator strengths vs n".to_string()))
        }
        "widths_nm" => {
            let samples = demo::PRINCIPAL
                .iter()
                .zip(demo::WIDTHS_NM.iter())
                .map(|(&n, &w)| (f64::from(n), w))
                .collect();
            Ok((samples, "built-in linewidths (nm) vs n".to_string()))
        }
        other => Err(CliError::Usage(format!(
            "key 'table': expected strengths, widths_nm, or empty, got '{other}'"
        ))),
    }
}

pub fn run(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let (samples, source) = load_samples(config)?;
    match config.str("trend") {
        "power_law" => run_power_law(config, &samples, &source),
        "linewidth" => run_linewidth(config, &samples, &source),
        other => Err(CliError::Usage(format!(
            "key 'trend': expected power_law or linewidth, got '{other}'"
        ))),
    }
}

fn run_power_law(
    config: &RunConfig,
    samples: &[(f64, f64)],
    source: &str,
) -> Result<TaskOutcome, CliError> {
    let fixed = config.opt_f64("fixed_exponent")?;
    let fit = fit_power_law(samples, fixed)?;

    let mut params = Table::named(&["name", "value"]);
    params.push_named("exponent", vec![fit.exponent]);
    params.push_named("exponent_standard_error", vec![fit.exponent_se]);
    params.push_named("prefactor", vec![fit.prefactor]);
    params.push_named("prefactor_standard_error", vec![fit.prefactor_se]);
    params.push_named("band_low", vec![fit.exponent - 3.0 * fit.exponent_se]);
    params.push_named("band_high", vec![fit.exponent + 3.0 * fit.exponent_se]);

    let mut curve = Table::numeric(&["x", "y", "fitted", "log_residual"]);
    for (i, &(x, y)) in samples.iter().enumerate() {
        curve.push(vec![x, y, fit.prefactor * x.powf(fit.exponent), fit.log_residuals[i]]);
    }

    let log = vec![
        format!("samples: {} from {source}", samples.len()),
        match fixed {
            Some(b) => format!("exponent held at {b}"),
            None => format!("exponent: {} ± {}", fit.exponent, fit.exponent_se),
        },
        format!("prefactor: {} ± {}", fit.prefactor, fit.prefactor_se),
        format!(
            "exponent band (±3 standard errors): [{}, {}]",
            fit.exponent - 3.0 * fit.exponent_se,
            fit.exponent + 3.0 * fit.exponent_se
        ),
    ];
    Ok(TaskOutcome::success(vec![
        Artifact::new("trend.csv", params.emit()),
        Artifact::new("fitcurve.csv", curve.emit()),
        provenance(&log),
    ]))
}

fn run_linewidth(
    config: &RunConfig,
    samples: &[(f64, f64)],
    source: &str,
) -> Result<TaskOutcome, CliError> {
    let pairs: Vec<(u32, f64)> = samples
        .iter()
        .map(|&(n, w)| Ok((cell_to_u32(n, "column 'n'")?, w)))
        .collect::<Result<_, CliError>>()?;
    let fit = fit_linewidth_law(&pairs, &lm_options(config)?)?;

    let mut curve = Table::numeric(&["n", "width", "fitted", "residual"]);
    for &(n, w) in &pairs {
        let fitted = fit.params.amplitude * shape_factor(n) + fit.params.offset;
        curve.push(vec![f64::from(n), w, fitted, fitted - w]);
    }

    let mut log = vec![
        format!("samples: {} from {source}", pairs.len()),
        format!("amplitude: {}", fit.params.amplitude),
        format!("offset (wide-n floor): {}", fit.params.offset),
    ];
    log.extend(convergence_log(&fit.report));
    let artifacts = vec![
        Artifact::new("trend.csv", params_table(&fit.report).emit()),
        Artifact::new("fitcurve.csv", curve.emit()),
        provenance(&log),
    ];
    match convergence_failure(&fit.report, "the linewidth-law fit") {
        Some(failure) => Ok(TaskOutcome::failed(artifacts, failure)),
        None => Ok(TaskOutcome::success(artifacts)),
    }
}
