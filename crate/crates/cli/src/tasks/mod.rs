//! One module per CLI task, plus the shared configuration helpers.

pub mod elliott;
pub mod fit;
pub mod invert_temp;
pub mod select_model;
pub mod simulate;
pub mod trends;

use rydex_core::lsq::lm::LmOptions;
use rydex_core::model::elliott::ElliottParams;
use rydex_core::PeakLayout;

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;

/// Runs the configured task, folding early errors into the outcome.
pub fn execute(config: &RunConfig) -> TaskOutcome {
    let result = match config.task() {
        "simulate" => simulate::run(config),
        "fit" => fit::run(config),
        "select-model" => select_model::run(config),
        "elliott" => elliott::run(config),
        "trends" => trends::run(config),
        "invert-temp" => invert_temp::run(config),
        other => Err(CliError::Usage(format!("unknown task '{other}'"))),
    };
    match result {
        Ok(outcome) => outcome,
        // A run that dies before producing results still leaves a
        // provenance record (quarantined for usage/data failures).
        Err(failure) => {
            let log = vec![format!("error: {failure}")];
            TaskOutcome::failed(vec![provenance(&log)], failure)
        }
    }
}

/// Solver stopping rules from the task configuration.
pub fn lm_options(config: &RunConfig) -> Result<LmOptions, CliError> {
    Ok(LmOptions {
        step_tolerance: config.f64("step_tolerance")?,
        gradient_tolerance: config.f64("gradient_tolerance")?,
        max_iterations: config.usize("max_iterations")?,
    })
}

/// Builds the peak layout shared by `fit` and `select-model` from the
/// `mode`, `n_start`, `background`, and (optionally) sigma keys.
pub fn layout_from_config(config: &RunConfig, peaks: usize) -> Result<PeakLayout, CliError> {
    let mut layout = match config.str("mode") {
        "free" => PeakLayout::free(peaks),
        "tied" => PeakLayout::tied_range(config.u32("n_start")?, peaks)
            .map_err(|e| CliError::Usage(e.to_string()))?,
        other => {
            return Err(CliError::Usage(format!(
                "key 'mode': expected tied or free, got '{other}'"
            )))
        }
    };
    if !config.bool("background")? {
        layout = layout.without_background();
    }
    Ok(layout)
}

/// Thermal-shift coefficients from the four `*_mev` keys.
pub fn elliott_from_config(config: &RunConfig) -> Result<ElliottParams, CliError> {
    ElliottParams::new(
        config.f64("bandgap_zero_mev")?,
        config.f64("bandgap_coupling_mev")?,
        config.f64("rydberg_zero_mev")?,
        config.f64("rydberg_coupling_mev")?,
    )
    .map_err(|e| CliError::Usage(e.to_string()))
}

/// The run log artifact every task emits.
pub fn provenance(lines: &[String]) -> Artifact {
    let mut body = String::new();
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    Artifact::new("provenance.txt", body)
}

/// Log lines describing how an input spectrum was normalized.
pub fn spectrum_log(meta: &crate::spectrum::SpectrumMeta, points: usize) -> Vec<String> {
    let mut lines = vec![format!("input: {points} points")];
    lines.push(format!(
        "input units: {}",
        match meta.units {
            crate::spectrum::AbscissaUnit::EnergyEv => "energy_eV",
            crate::spectrum::AbscissaUnit::WavelengthNm =>
                "wavelength_nm (converted to energy_eV)",
        }
    ));
    if meta.reversed {
        lines.push("input order: descending; reversed to ascending energy".to_string());
    }
    if meta.sorted {
        lines.push("warning: input abscissa was not monotonic; rows sorted".to_string());
        if let Some(original) = &meta.original_lines {
            let order: Vec<String> = original.iter().map(|l| l.to_string()).collect();
            lines.push(format!("original row order (by input line): {}", order.join(",")));
        }
    }
    for (key, value) in &meta.headers {
        if key != "units" {
            lines.push(format!("input header: {key}: {value}"));
        }
    }
    lines
}

/// A fit convergence block for provenance logs.
pub fn convergence_log(report: &rydex_core::lsq::FitReport) -> Vec<String> {
    vec![
        format!("converged: {}", report.converged),
        format!("iterations: {} (cap {})", report.iterations, report.iteration_cap),
        format!(
            "step criterion met: {} (tolerance {})",
            report.step_criterion_met, report.step_tolerance
        ),
        format!(
            "gradient criterion met: {} (norm {}, tolerance {})",
            report.gradient_criterion_met, report.gradient_norm, report.gradient_tolerance
        ),
        format!("residual mean squared error: {}", report.residual_mse),
        format!("jacobian: {}", if report.used_fd_jacobian { "finite-difference" } else { "analytic" }),
    ]
}

/// The non-convergence failure for a fit report, if any.
pub fn convergence_failure(report: &rydex_core::lsq::FitReport, what: &str) -> Option<CliError> {
    if report.converged {
        None
    } else {
        Some(CliError::NonConvergence(format!(
            "{what} stopped after {} iterations without meeting either stopping criterion",
            report.iterations
        )))
    }
}

/// `name,value,uncertainty` table for a fit report.
pub fn params_table(report: &rydex_core::lsq::FitReport) -> crate::table::Table {
    let mut t = crate::table::Table::named(&["name", "value", "uncertainty"]);
    for (i, name) in report.names.iter().enumerate() {
        t.push_named(name.clone(), vec![report.values[i], report.uncertainties[i]]);
    }
    t
}
