//! `simulate`: synthesize a spectrum or a thermal center table.
//!
//! `kind = spectrum` evaluates a peak model (the built-in reference set or
//! one read from a parameter table) on a uniform grid and adds seeded
//! Gaussian noise. It emits the noisy spectrum, the clean curve, and the
//! generating parameters under the same names a fit would report, so
//! generate-and-recover loops can diff the two tables directly.
//!
//! `kind = centers` tabulates thermally shifted resonance energies (meV)
//! over a temperature sweep, the input format of the `elliott` task.

use std::collections::BTreeMap;

use rydex_core::model::units::width_nm_to_ev;
use rydex_core::model::{FanoPeakParams, PeakModel, RydbergSeriesParams, UrbachParams};
use rydex_core::synth::{synth_center_table, synth_spectrum, NoiseSpec};
use rydex_core::{demo, EnergyGrid};

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::Table;
use crate::tasks::{elliott_from_config, provenance};

pub fn run(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    match config.str("kind") {
        "spectrum" => run_spectrum(config),
        "centers" => run_centers(config),
        other => Err(CliError::Usage(format!(
            "key 'kind': expected spectrum or centers, got '{other}'"
        ))),
    }
}

fn run_spectrum(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let sigma_instr = config.f64("sigma_instr_ev")?;
    let (model, truth, model_source) = match config.str("model") {
        "reference" => {
            let model = demo::bulk_model_with_sigma(sigma_instr);
            (model, reference_truth_table(sigma_instr), "built-in reference set".to_string())
        }
        "file" => {
            let path = std::path::PathBuf::from(config.str("model_file"));
            if path.as_os_str().is_empty() {
                return Err(CliError::Usage(
                    "model = file needs model_file = <parameter table>".into(),
                ));
            }
            let table = Table::parse(&path)?;
            let model = model_from_table(&table, &path.display().to_string(), sigma_instr)?;
            (model, table, format!("parameter table {}", path.display()))
        }
        other => {
            return Err(CliError::Usage(format!(
                "key 'model': expected reference or file, got '{other}'"
            )))
        }
    };

    let noise_abs = config.f64("noise")?;
    let noise_frac = config.opt_f64("noise_frac")?;
    let noise = match (noise_abs, noise_frac) {
        (a, Some(_)) if a != 0.0 => {
            return Err(CliError::Usage(
                "set either noise or noise_frac, not both".into(),
            ))
        }
        (_, Some(f)) => NoiseSpec::RelativeToMax(f),
        (0.0, None) => NoiseSpec::None,
        (a, None) => NoiseSpec::Absolute(a),
    };

    let synthetic = synth_spectrum(
        &model,
        config.f64("grid_min_ev")?,
        config.f64("grid_max_ev")?,
        config.usize("grid_points")?,
        noise,
        config.seed()?,
    )?;

    let mut spectrum_headers = vec![("units".to_string(), "energy_eV".to_string())];
    for (config_key, header_key) in [("temperature_k", "temperature_K"), ("power_uw", "power_uW")]
    {
        let value = config.str(config_key);
        if !value.is_empty() {
            spectrum_headers.push((header_key.to_string(), value.to_string()));
        }
    }
    let spectrum_artifact = |name: &str, grid: &EnergyGrid| {
        let mut artifact = Artifact::new(name, crate::spectrum::emit_rows(grid));
        for (k, v) in &spectrum_headers {
            artifact = artifact.with_header(k.clone(), v.clone());
        }
        artifact.with_header("columns", "energy_eV, intensity")
    };

    let log = vec![
        format!("model: {model_source}"),
        format!("peaks: {}", model.peaks().len()),
        format!(
            "grid: {} points on [{}, {}] eV",
            synthetic.spectrum.len(),
            synthetic.spectrum.span().0,
            synthetic.spectrum.span().1
        ),
        format!("noise sigma applied: {}", synthetic.noise_sigma),
    ];
    Ok(TaskOutcome::success(vec![
        spectrum_artifact("spectrum.csv", &synthetic.spectrum),
        spectrum_artifact("clean.csv", &synthetic.clean),
        Artifact::new("truth.csv", truth.emit()),
        provenance(&log),
    ]))
}

fn run_centers(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let params = elliott_from_config(config)?;
    let levels = config.list_u32("levels")?;
    if levels.is_empty() {
        return Err(CliError::Usage("key 'levels': need at least one level".into()));
    }
    let defects = config.list_f64("defects")?;
    let defects = if defects.is_empty() { vec![0.0; levels.len()] } else { defects };
    if defects.len() != levels.len() {
        return Err(CliError::Usage(format!(
            "{} levels but {} defects; the lists must pair up",
            levels.len(),
            defects.len()
        )));
    }
    let paired: Vec<(u32, f64)> = levels.iter().copied().zip(defects).collect();

    let (t_min, t_max, t_step) = (
        config.f64("temp_min_k")?,
        config.f64("temp_max_k")?,
        config.f64("temp_step_k")?,
    );
    if !(t_step > 0.0) || t_max < t_min {
        return Err(CliError::Usage(format!(
            "bad temperature sweep: min {t_min}, max {t_max}, step {t_step}"
        )));
    }
    let count = ((t_max - t_min) / t_step + 1e-9).floor() as usize + 1;
    let temperatures: Vec<f64> = (0..count).map(|i| t_min + i as f64 * t_step).collect();

    let rows = synth_center_table(
        &params,
        &paired,
        &temperatures,
        config.f64("noise_mev")?,
        config.seed()?,
    )?;

    let mut table = Table::numeric(&["n", "temperature_K", "energy_meV"]);
    for row in &rows {
        table.push(vec![f64::from(row.n), row.temperature, row.energy]);
    }
    let log = vec![
        format!("levels: {:?}", levels),
        format!("temperatures: {} values from {t_min} to {t_max} K", temperatures.len()),
        format!("center noise sigma: {} meV", config.f64("noise_mev")?),
    ];
    Ok(TaskOutcome::success(vec![
        Artifact::new("centers.csv", table.emit()),
        provenance(&log),
    ]))
}

/// The generating parameters of the reference model, named like a tied fit.
fn reference_truth_table(sigma_instr: f64) -> Table {
    let series = demo::bulk_series();
    let mut t = Table::named(&["name", "value"]);
    t.push_named("bandgap", vec![demo::BANDGAP_EV]);
    t.push_named("rydberg", vec![demo::RYDBERG_EV]);
    for (i, &n) in demo::PRINCIPAL.iter().enumerate() {
        t.push_named(format!("defect_{n}"), vec![demo::DEFECTS[i]]);
    }
    for (i, &n) in demo::PRINCIPAL.iter().enumerate() {
        let center = series.energy(n).expect("reference levels are valid");
        let width_ev = width_nm_to_ev(demo::WIDTHS_NM[i], center).expect("positive center");
        t.push_named(format!("width_{n}"), vec![width_ev]);
        t.push_named(format!("amp_{n}"), vec![demo::STRENGTHS[i]]);
        t.push_named(format!("q_{n}"), vec![demo::ASYMMETRY[i]]);
    }
    t.push_named("urbach_amp", vec![demo::URBACH_AMPLITUDE]);
    t.push_named("urbach_width", vec![demo::URBACH_WIDTH_EV]);
    t.push_named("sigma_instr", vec![sigma_instr]);
    t
}

/// Builds a model from a `name,value,…` parameter table — either the tied
/// naming (`bandgap`, `rydberg`, `defect_n`, `width_n`, `amp_n`, `q_n`) or
/// the free naming (`center_i`, `width_i`, `amp_i`, `q_i`), plus optional
/// `urbach_amp`, `urbach_width`, and `sigma_instr` rows. A `sigma_instr`
/// row overrides the configured instrumental sigma.
fn model_from_table(
    table: &Table,
    origin: &str,
    sigma_default: f64,
) -> Result<PeakModel, CliError> {
    let names = table.names().map_err(|_| {
        CliError::Data(format!("{origin}: a model table needs a name column"))
    })?;
    let wrap = |e: rydex_core::ModelError| CliError::Data(format!("{origin}: {e}"));
    let sigma = table.value_of("sigma_instr").unwrap_or(sigma_default);
    let has = |name: &str| names.iter().any(|n| n == name);

    if has("rydberg") {
        let bandgap = table.value_of("bandgap")?;
        let rydberg = table.value_of("rydberg")?;
        let mut levels: Vec<u32> = Vec::new();
        for name in names {
            if let Some(n) = name.strip_prefix("defect_") {
                let n: u32 = n.parse().map_err(|_| {
                    CliError::Data(format!("{origin}: bad level in row '{name}'"))
                })?;
                levels.push(n);
            }
        }
        levels.sort_unstable();
        if levels.is_empty() {
            return Err(CliError::Data(format!(
                "{origin}: a tied model table needs defect_<n> rows"
            )));
        }
        let defects: BTreeMap<u32, f64> = levels
            .iter()
            .map(|&n| Ok((n, table.value_of(&format!("defect_{n}"))?)))
            .collect::<Result<_, CliError>>()?;
        let series = RydbergSeriesParams::new(bandgap, rydberg, defects).map_err(wrap)?;
        let rows: Vec<(u32, f64, f64, f64)> = levels
            .iter()
            .map(|&n| {
                Ok((
                    n,
                    table.value_of(&format!("width_{n}"))?,
                    table.value_of(&format!("amp_{n}"))?,
                    table.value_of(&format!("q_{n}"))?,
                ))
            })
            .collect::<Result<_, CliError>>()?;
        let (urbach_amp, urbach_width) = if has("urbach_amp") {
            (table.value_of("urbach_amp")?, table.value_of("urbach_width")?)
        } else {
            (0.0, 1.0)
        };
        PeakModel::from_series(&series, &rows, urbach_amp, urbach_width, sigma).map_err(wrap)
    } else {
        let mut indices: Vec<u32> = Vec::new();
        for name in names {
            if let Some(i) = name.strip_prefix("center_") {
                let i: u32 = i.parse().map_err(|_| {
                    CliError::Data(format!("{origin}: bad peak index in row '{name}'"))
                })?;
                indices.push(i);
            }
        }
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(CliError::Data(format!(
                "{origin}: a model table needs center_<i> or tied series rows"
            )));
        }
        let mut peaks = Vec::with_capacity(indices.len());
        for &i in &indices {
            peaks.push(
                FanoPeakParams::new(
                    table.value_of(&format!("center_{i}"))?,
                    table.value_of(&format!("width_{i}"))?,
                    table.value_of(&format!("amp_{i}"))?,
                    table.value_of(&format!("q_{i}"))?,
                )
                .map_err(wrap)?,
            );
        }
        peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
        let urbach = if has("urbach_amp") {
            UrbachParams::new(
                table.value_of("urbach_amp")?,
                table.value_of("urbach_width")?,
                table.value_of("bandgap")?,
            )
            .map_err(wrap)?
        } else {
            let top = peaks.last().expect("peaks is non-empty").center;
            UrbachParams::new(0.0, 1.0, top + 1.0).map_err(wrap)?
        };
        PeakModel::new(peaks, urbach, sigma).map_err(wrap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_truth_matches_the_builtin_model() {
        let truth = reference_truth_table(0.0);
        let model =
            model_from_table(&truth, "truth", 0.0).expect("truth table reconstructs");
        assert_eq!(model, demo::bulk_model());
    }

    #[test]
    fn free_tables_build_without_a_tail() {
        let mut t = Table::named(&["name", "value"]);
        t.push_named("center_1", vec![2.1]);
        t.push_named("width_1", vec![0.01]);
        t.push_named("amp_1", vec![0.5]);
        t.push_named("q_1", vec![0.0]);
        let model = model_from_table(&t, "test", 0.0).unwrap();
        assert_eq!(model.peaks().len(), 1);
        assert_eq!(model.urbach.amplitude, 0.0);
    }

    #[test]
    fn tied_tables_without_defect_rows_are_rejected() {
        let mut t = Table::named(&["name", "value"]);
        t.push_named("bandgap", vec![2.173]);
        t.push_named("rydberg", vec![0.0949]);
        let err = model_from_table(&t, "test", 0.0).unwrap_err();
        assert!(err.to_string().contains("defect_<n>"), "{err}");
    }
}
