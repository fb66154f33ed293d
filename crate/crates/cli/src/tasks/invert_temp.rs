//! `invert-temp`: effective lattice temperature from a resonance energy.
//!
//! Solves the thermal-shift law for the temperature at which level `n`
//! (with its quantum defect) sits at the measured energy. Useful for
//! attributing power-induced line shifts to laser heating: fit the energy
//! at each excitation power, then invert each one to a temperature.

use rydex_core::lsq::invert_effective_temperature;

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::Table;
use crate::tasks::{elliott_from_config, provenance};

pub fn run(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let measured = config.opt_f64("energy_mev")?.ok_or_else(|| {
        CliError::Usage("key 'energy_mev' is required (the measured energy, meV)".into())
    })?;
    let params = elliott_from_config(config)?;
    let n = config.u32("n")?;
    let defect = config.f64("defect")?;
    let bracket = (config.f64("bracket_lo_k")?, config.f64("bracket_hi_k")?);

    let temperature = invert_effective_temperature(&params, n, defect, measured, bracket)?;
    let check = params
        .level_energy(n, defect, temperature)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut result = Table::named(&["name", "value"]);
    result.push_named("temperature_K", vec![temperature]);
    result.push_named("measured_energy_meV", vec![measured]);
    result.push_named("model_energy_meV", vec![check]);
    result.push_named("n", vec![f64::from(n)]);
    result.push_named("defect", vec![defect]);
    result.push_named("bracket_lo_K", vec![bracket.0]);
    result.push_named("bracket_hi_K", vec![bracket.1]);

    let log = vec![
        format!("measured energy: {measured} meV at n = {n}, defect = {defect}"),
        format!("temperature: {temperature} K (bracket [{}, {}] K)", bracket.0, bracket.1),
        format!("model energy at that temperature: {check} meV"),
    ];
    Ok(TaskOutcome::success(vec![
        Artifact::new("temperature.csv", result.emit()),
        provenance(&log),
    ]))
}
