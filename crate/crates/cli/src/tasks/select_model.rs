//! `select-model`: compare candidate peak counts by minimum free energy.
//!
//! Each candidate count is sampled with replica-exchange Monte Carlo over
//! a noise ladder, the free energy is integrated per ladder level, and the
//! count with the lowest minimum wins. Artifacts: a selection summary, one
//! free-energy profile per candidate (plot-ready), the posterior parameter
//! summaries of the winner, and a provenance log with the sampler
//! diagnostics and warnings.

use rydex_core::rxmc::{select_model, NoiseLadder, RxmcSettings};

use crate::artifact::{Artifact, TaskOutcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::spectrum::parse_spectrum;
use crate::table::Table;
use crate::tasks::{layout_from_config, provenance, spectrum_log};

pub fn run(config: &RunConfig) -> Result<TaskOutcome, CliError> {
    let input = config.required_input()?;
    let (grid, meta) = parse_spectrum(&input)?;

    let template = layout_from_config(config, 0)?;
    let candidates: Vec<usize> = config
        .list_u32("candidates")?
        .into_iter()
        .map(|k| k as usize)
        .collect();
    if candidates.is_empty() {
        return Err(CliError::Usage("key 'candidates': need at least one count".into()));
    }

    let explicit = config.list_f64("ladder")?;
    let ladder = if explicit.is_empty() {
        let dmax = grid.max_value().abs();
        if dmax == 0.0 {
            return Err(CliError::Data(
                "the spectrum maximum is zero; set an explicit ladder".into(),
            ));
        }
        NoiseLadder::geometric(
            config.f64("ladder_max_frac")? * dmax,
            config.f64("ladder_min_frac")? * dmax,
            config.usize("ladder_levels")?,
        )?
    } else {
        NoiseLadder::new(explicit)?
    };

    let exchange_interval = config.usize("exchange_interval")?;
    let settings = RxmcSettings {
        burn_in_sweeps: config.usize("burn_in")?,
        sample_sweeps: config.usize("samples")?,
        exchange_interval: if exchange_interval == 0 { usize::MAX } else { exchange_interval },
        adapt_interval: config.usize("adapt_interval")?,
        thin: config.usize("thin")?,
        seed: config.seed()?,
        bridge_ratio: config.f64("bridge_ratio")?,
        target_acceptance: config.f64("target_acceptance")?,
    };

    let report = select_model(&grid, &template, &candidates, &ladder, &settings)?;

    let mut selection = Table::numeric(&[
        "peak_count",
        "min_free_energy",
        "standard_error",
        "argmin_sigma",
        "selected",
    ]);
    for (&k, curve) in report.candidates.iter().zip(&report.curves) {
        selection.push(vec![
            k as f64,
            curve.min_free_energy(),
            curve.min_standard_error(),
            curve.argmin_sigma(),
            f64::from(u8::from(report.selected.contains(&k))),
        ]);
    }

    let mut artifacts = vec![Artifact::new("selection.csv", selection.emit())];
    for (&k, curve) in report.candidates.iter().zip(&report.curves) {
        let mut t = Table::numeric(&[
            "sigma",
            "free_energy",
            "standard_error",
            "mean_misfit",
            "proposal_acceptance",
        ]);
        for i in 0..curve.sigmas.len() {
            t.push(vec![
                curve.sigmas[i],
                curve.free_energy[i],
                curve.standard_error[i],
                curve.mean_mse[i],
                curve.proposal_acceptance[i],
            ]);
        }
        artifacts.push(Artifact::new(format!("fcurve_{k}.csv"), t.emit()));
    }

    let best_curve = &report.curves[report
        .candidates
        .iter()
        .position(|&k| k == report.best)
        .expect("best is one of the candidates")];
    let mut posterior = Table::named(&["name", "mean", "sd", "q025", "q975"]);
    for p in &best_curve.posterior {
        posterior.push_named(p.name.clone(), vec![p.mean, p.sd, p.q025, p.q975]);
    }
    artifacts.push(Artifact::new(
        format!("posterior_{}.csv", report.best),
        posterior.emit(),
    ));

    let mut log = spectrum_log(&meta, grid.len());
    log.push(format!("candidates: {:?}", report.candidates));
    log.push(format!("ladder: {:?}", ladder.sigmas()));
    log.push(format!("best peak count: {}", report.best));
    log.push(format!("selected (within one combined standard error): {:?}", report.selected));
    log.push(format!("ambiguous: {}", report.ambiguous));
    for (&k, curve) in report.candidates.iter().zip(&report.curves) {
        log.push(format!(
            "candidate {k}: F_min = {} ± {} at sigma = {}, {} bridge levels",
            curve.min_free_energy(),
            curve.min_standard_error(),
            curve.argmin_sigma(),
            curve.bridge_level_count,
        ));
        for warning in &curve.warnings {
            log.push(format!("candidate {k} warning: {warning}"));
        }
    }
    artifacts.push(provenance(&log));
    Ok(TaskOutcome::success(artifacts))
}
