//! `elliott`: fit the thermal-shift law to a resonance center table.
//!
//! The input is a table with columns `n`, `temperature_K`, `energy_meV`
//! (the output format of `simulate` with `kind = centers`). The fit
//! recovers the four thermal coefficients — and, optionally, one quantum
//! defect per level — then emits the parameter table, per-row residuals,
//! and smooth predicted curves for plotting.

use rydex_core::lsq::fit_elliott;
use rydex_core::model::elliott::CenterRow;

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{cell_to_u32, Table};
use crate::tasks::{convergence_failure, convergence_log, lm_options, params_table, provenance};

pub fn run(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let input = config.required_input()?;
    let table = Table::parse(&input)?;
    let ns = table.column_values("n")?;
    let temps = table.column_values("temperature_K")?;
    let energies = table.column_values("energy_meV")?;

    let mut rows = Vec::with_capacity(ns.len());
    for i in 0..ns.len() {
        rows.push(CenterRow {
            n: cell_to_u32(ns[i], "column 'n'")?,
            temperature: temps[i],
            energy: energies[i],
        });
    }

    let free_defects = config.bool("free_defects")?;
    let fit = fit_elliott(&rows, !free_defects, &lm_options(config)?)?;

    let mut residuals =
        Table::numeric(&["n", "temperature_K", "energy_meV", "predicted_meV", "residual_meV"]);
    for row in &rows {
        let predicted = fit
            .params
            .level_energy(row.n, fit.defects[&row.n], row.temperature)
            .map_err(|e| CliError::Data(e.to_string()))?;
        residuals.push(vec![
            f64::from(row.n),
            row.temperature,
            row.energy,
            predicted,
            predicted - row.energy,
        ]);
    }

    // Smooth prediction curves over the observed temperature range.
    let (t_min, t_max) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.temperature), hi.max(r.temperature))
    });
    let points = config.usize("curve_points")?.max(2);
    let mut levels: Vec<u32> = rows.iter().map(|r| r.n).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut columns: Vec<String> = vec!["temperature_K".to_string()];
    columns.extend(levels.iter().map(|n| format!("level_{n}_meV")));
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut curves = Table::numeric(&column_refs);
    for i in 0..points {
        let t = t_min + (t_max - t_min) * i as f64 / (points - 1) as f64;
        let mut row = vec![t];
        for &n in &levels {
            row.push(
                fit.params
                    .level_energy(n, fit.defects[&n], t)
                    .map_err(|e| CliError::Data(e.to_string()))?,
            );
        }
        curves.push(row);
    }

    let mut log = vec![
        format!("input: {} rows, levels {:?}", rows.len(), levels),
        format!("temperature range: [{t_min}, {t_max}] K"),
        format!("defects: {}", if free_defects { "fitted per level" } else { "held at zero" }),
    ];
    if free_defects {
        log.push(
            "note: with free defects the parameterization carries an affine gauge; \
             individual coefficients and defects are reported as found, and only \
             predicted energies are uniquely determined"
                .to_string(),
        );
    }
    log.extend(convergence_log(&fit.report));

    let artifacts = vec![
        Artifact::new("params.csv", params_table(&fit.report).emit()),
        Artifact::new("residuals.csv", residuals.emit()),
        Artifact::new("curves.csv", curves.emit()),
        provenance(&log),
    ];
    match convergence_failure(&fit.report, "the thermal-shift fit") {
        Some(failure) => Ok(TaskOutcome::failed(artifacts, failure)),
        None => Ok(TaskOutcome::success(artifacts)),
    }
}
