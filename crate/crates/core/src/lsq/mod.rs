//! Least-squares fits: spectra, thermal center tables, scaling trends.
//!
//! Everything funnels through the bounded Levenberg–Marquardt solver in
//! [`lm`]. Reports carry parameter values with 1σ uncertainties, the full
//! covariance, the mean squared residual, and an honest convergence verdict
//! (both the step and gradient criteria must hold within the iteration cap).

pub mod lm;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::elliott::{CenterRow, CenterTableError, ElliottParams};
use crate::model::scaling::{shape_factor, LinewidthLawParams};
use crate::model::{EnergyGrid, ModelError};
use crate::params::{ParamError, ParamSpace};
use crate::peaks::PeakLayout;

pub use lm::{fd_jacobian, max_jacobian_mismatch, LmOptions};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{points} data points cannot constrain {params} free parameters")]
    Underdetermined { params: usize, points: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    CenterTable(#[from] CenterTableError),
    #[error("degenerate fit setup: {0}")]
    DegenerateDesign(String),
    #[error("trend data must be positive to fit in log space, got {value} at row {index}")]
    NonPositiveSample { index: usize, value: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("level energy does not vary over the temperature bracket (thermal sensitivity {0:.3e} meV)")]
    NonMonotonicBracket(f64),
    #[error("measured energy {measured} meV lies outside the attainable range [{lo}, {hi}] meV over the bracket")]
    EnergyOutOfRange { measured: f64, lo: f64, hi: f64 },
    #[error("residuals became non-finite at iteration {0}")]
    NonFiniteEvaluation(usize),
}

/// A completed fit: named values, 1σ uncertainties, covariance, and the
/// solver's convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// 1σ from the covariance diagonal; zero for pinned parameters.
    pub uncertainties: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Mean squared residual at the solution.
    pub residual_mse: f64,
    pub iterations: usize,
    /// True when either stopping criterion held within the iteration cap.
    pub converged: bool,
    pub step_criterion_met: bool,
    pub gradient_criterion_met: bool,
    pub gradient_norm: f64,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    pub iteration_cap: usize,
    pub used_fd_jacobian: bool,
}

impl FitReport {
    fn from_outcome(outcome: lm::LmOutcome, names: Vec<String>, options: &LmOptions) -> Self {
        let uncertainties =
            (0..names.len()).map(|i| outcome.covariance[(i, i)].max(0.0).sqrt()).collect();
        Self {
            names,
            values: outcome.values,
            uncertainties,
            covariance: outcome.covariance,
            residual_mse: outcome.residual_mse,
            iterations: outcome.iterations,
            converged: outcome.converged,
            step_criterion_met: outcome.step_criterion_met,
            gradient_criterion_met: outcome.gradient_criterion_met,
            gradient_norm: outcome.gradient_norm,
            step_tolerance: options.step_tolerance,
            gradient_tolerance: options.gradient_tolerance,
            iteration_cap: options.max_iterations,
            used_fd_jacobian: outcome.used_fd_jacobian,
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.uncertainties[i])
    }

    /// Applies a permutation `new_index -> old_index` to names, values,
    /// uncertainties and the covariance.
    fn permuted(mut self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.values.len());
        let take = |v: &[f64]| perm.iter().map(|&j| v[j]).collect::<Vec<_>>();
        self.values = take(&self.values);
        self.uncertainties = take(&self.uncertainties);
        let p = perm.len();
        let mut cov = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] = self.covariance[(perm[a], perm[b])];
            }
        }
        self.covariance = cov;
        self
    }
}

/// Result of a spectral peak fit.
#[derive(Debug, Clone)]
pub struct PeakFit {
    pub report: FitReport,
    /// The fitted curve on the data grid.
    pub curve: Vec<f64>,
}

/// Fits a K-peak model to a spectrum over the given parameter space.
///
/// In free mode the result is canonicalized: peak blocks are reordered by
/// ascending fitted center (covariance included), so `center_1` always
/// names the lowest-energy peak.
pub fn fit_peaks(
    spectrum: &EnergyGrid,
    layout: &PeakLayout,
    space: &ParamSpace,
    options: &LmOptions,
) -> Result<PeakFit, FitError> {
    if space.len() != layout.param_count() {
        return Err(FitError::DegenerateDesign(format!(
            "parameter space has {} entries but the layout needs {}",
            space.len(),
            layout.param_count()
        )));
    }
    let energies = spectrum.energies();
    let data = spectrum.values();
    let m = energies.len();

    let mut buf = Vec::with_capacity(m);
    let mut residuals = |theta: &[f64], out: &mut [f64]| -> Result<(), FitError> {
        layout.eval_into(theta, energies, &mut buf)?;
        for i in 0..m {
            out[i] = buf[i] - data[i];
        }
        Ok(())
    };

    let outcome = if layout.fit_sigma {
        // No closed-form column for the convolution width: finite differences.
        lm::minimize(space, m, &mut residuals, None, options)?
    } else {
        let mut jac = |theta: &[f64]| -> Result<DMatrix<f64>, FitError> {
            Ok(layout
                .jacobian(theta, energies)?
                .expect("analytic jacobian exists when sigma is fixed"))
        };
        lm::minimize(space, m, &mut residuals, Some(&mut jac), options)?
    };

    let curve = layout.eval(&outcome.values, energies)?;
    let perm = layout.canonical_permutation(&outcome.values)?;
    let report =
        FitReport::from_outcome(outcome, layout.param_names(), options).permuted(&perm);
    Ok(PeakFit { report, curve })
}

/// Result of a thermal center-table fit.
#[derive(Debug, Clone)]
pub struct ElliottFit {
    pub report: FitReport,
    pub params: ElliottParams,
    /// Fitted (or assumed) quantum defects per level.
    pub defects: BTreeMap<u32, f64>,
}

/// Fits the four thermal coefficients to a center table (meV).
///
/// With `assume_zero_defect` every level is taken at its hydrogenic
/// position; otherwise one defect per distinct level joins the fit. Rows
/// are equally weighted. The table must span at least two temperatures,
/// and—when defects are free—at least two levels.
///
/// Freeing the defects makes the parameterization redundant: rescaling
/// and shifting every `(n - δ_n)⁻²` can be absorbed into the four
/// coefficients without changing any predicted energy, so the individual
/// values are determined only up to that gauge (their bounds cut it, but
/// do not remove it). Predicted energies, and the coefficients under
/// `assume_zero_defect`, are well-determined.
pub fn fit_elliott(
    rows: &[CenterRow],
    assume_zero_defect: bool,
    options: &LmOptions,
) -> Result<ElliottFit, FitError> {
    let mut levels: Vec<u32> = rows.iter().map(|r| r.n).collect();
    levels.sort_unstable();
    levels.dedup();
    let n_defects = if assume_zero_defect { 0 } else { levels.len() };
    let needed = 4 + n_defects;
    if rows.len() < needed {
        return Err(CenterTableError::TooFewRows { needed, got: rows.len() }.into());
    }
    for row in rows {
        if row.n < 2 {
            return Err(FitError::Model(ModelError::PrincipalTooSmall(row.n)));
        }
        if !(row.temperature >= 0.0) {
            return Err(FitError::Model(ModelError::NegativeTemperature(row.temperature)));
        }
    }
    let mut temps: Vec<f64> = rows.iter().map(|r| r.temperature).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    if temps.len() < 2 {
        return Err(CenterTableError::SingleTemperature.into());
    }
    if !assume_zero_defect && levels.len() < 2 {
        return Err(CenterTableError::SingleLevel.into());
    }

    let e_max = rows.iter().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max);
    let mut specs = vec![
        crate::params::ParamSpec::free("bandgap_zero", e_max + 30.0),
        crate::params::ParamSpec::free("bandgap_coupling", -10.0),
        crate::params::ParamSpec::bounded("rydberg_zero", 80.0, 1e-9, f64::INFINITY),
        crate::params::ParamSpec::free("rydberg_coupling", -10.0),
    ];
    if !assume_zero_defect {
        for &n in &levels {
            specs.push(crate::params::ParamSpec::bounded(format!("defect_{n}"), 0.0, -0.5, 0.9));
        }
    }
    let space = ParamSpace::new(specs)?;

    // Shared phonon factor per row; defects enter through 1/(n-δ)².
    let factors: Vec<f64> = {
        let probe = ElliottParams::new(0.0, 1.0, 1.0, 0.0).map_err(FitError::Model)?;
        rows.iter()
            .map(|r| probe.phonon_factor(r.temperature))
            .collect::<Result<_, _>>()
            .map_err(FitError::Model)?
    };
    let defect_index: BTreeMap<u32, usize> =
        levels.iter().enumerate().map(|(i, &n)| (n, 4 + i)).collect();

    let m = rows.len();
    let mut residuals = |p: &[f64], out: &mut [f64]| -> Result<(), FitError> {
        for (i, row) in rows.iter().enumerate() {
            let delta = if assume_zero_defect { 0.0 } else { p[defect_index[&row.n]] };
            let eff = row.n as f64 - delta;
            let inv2 = 1.0 / (eff * eff);
            let gap = p[0] + p[1] * factors[i];
            let ry = p[2] + p[3] * factors[i];
            out[i] = gap - ry * inv2 - row.energy;
        }
        Ok(())
    };
    let mut jacobian = |p: &[f64]| -> Result<DMatrix<f64>, FitError> {
        let mut j = DMatrix::zeros(m, space.len());
        for (i, row) in rows.iter().enumerate() {
            let delta = if assume_zero_defect { 0.0 } else { p[defect_index[&row.n]] };
            let eff = row.n as f64 - delta;
            let inv2 = 1.0 / (eff * eff);
            j[(i, 0)] = 1.0;
            j[(i, 1)] = factors[i];
            j[(i, 2)] = -inv2;
            j[(i, 3)] = -factors[i] * inv2;
            if !assume_zero_defect {
                let ry = p[2] + p[3] * factors[i];
                j[(i, defect_index[&row.n])] = -2.0 * ry / (eff * eff * eff);
            }
        }
        Ok(j)
    };

    let outcome = lm::minimize(&space, m, &mut residuals, Some(&mut jacobian), options)?;
    let params =
        ElliottParams::new(outcome.values[0], outcome.values[1], outcome.values[2], outcome.values[3])
            .map_err(FitError::Model)?;
    let defects: BTreeMap<u32, f64> = if assume_zero_defect {
        levels.iter().map(|&n| (n, 0.0)).collect()
    } else {
        levels.iter().map(|&n| (n, outcome.values[defect_index[&n]])).collect()
    };
    let report = FitReport::from_outcome(outcome, space.names(), options);
    Ok(ElliottFit { report, params, defects })
}

/// Default temperature bracket (K) for [`invert_effective_temperature`].
pub const DEFAULT_TEMPERATURE_BRACKET: (f64, f64) = (0.0, 400.0);

/// Solves `E_n(T) = measured_energy` (meV) for T inside `bracket` by
/// bisection on the monotonic thermal model.
///
/// Fails when the model barely varies over the bracket (couplings ≈ 0) or
/// when the measured energy lies outside the attainable range.
pub fn invert_effective_temperature(
    params: &ElliottParams,
    n: u32,
    defect: f64,
    measured_energy: f64,
    bracket: (f64, f64),
) -> Result<f64, FitError> {
    let (t_lo, t_hi) = bracket;
    if !(t_hi > t_lo) || !(t_lo >= 0.0) {
        return Err(FitError::DegenerateDesign(format!(
            "invalid temperature bracket [{t_lo}, {t_hi}]"
        )));
    }
    if !measured_energy.is_finite() {
        return Err(FitError::Model(ModelError::NonFinite {
            name: "measured energy",
            value: measured_energy,
        }));
    }
    let e_lo = params.level_energy(n, defect, t_lo)?;
    let e_hi = params.level_energy(n, defect, t_hi)?;
    let sensitivity = e_hi - e_lo;
    if sensitivity.abs() < 1e-9 {
        return Err(FitError::NonMonotonicBracket(sensitivity));
    }
    let (mut lo, mut hi) = (t_lo, t_hi);
    let (e_min, e_max) = if e_lo < e_hi { (e_lo, e_hi) } else { (e_hi, e_lo) };
    if measured_energy < e_min || measured_energy > e_max {
        return Err(FitError::EnergyOutOfRange { measured: measured_energy, lo: e_min, hi: e_max });
    }
    // g(T) = E(T) - measured changes sign across the bracket; the phonon
    // factor is strictly monotonic, so bisection is safe.
    let g_lo = e_lo - measured_energy;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = params.level_energy(n, defect, mid)? - measured_energy;
        if (g_mid >= 0.0) == (g_lo >= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of a linewidth-law fit.
#[derive(Debug, Clone)]
pub struct LinewidthFit {
    pub report: FitReport,
    pub params: LinewidthLawParams,
}

/// Fits `Γ(n) = α·(n²-1)/n⁵ + β` to `(n, width)` samples. The model is
/// linear in (α, β); β is constrained non-negative.
pub fn fit_linewidth_law(
    samples: &[(u32, f64)],
    options: &LmOptions,
) -> Result<LinewidthFit, FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFewPoints { needed: 2, got: samples.len() });
    }
    for &(n, _) in samples {
        if n < 1 {
            return Err(FitError::Model(ModelError::PrincipalTooSmall(n)));
        }
    }
    let mut ns: Vec<u32> = samples.iter().map(|s| s.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(FitError::DegenerateDesign(
            "all samples share one n; α and β are indistinguishable".into(),
        ));
    }
    let w_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let space = ParamSpace::new(vec![
        crate::params::ParamSpec::free("amplitude", 1.0),
        crate::params::ParamSpec::bounded("offset", w_min.max(1e-12), 0.0, f64::INFINITY),
    ])?;
    let m = samples.len();
    let mut residuals = |p: &[f64], out: &mut [f64]| -> Result<(), FitError> {
        for (i, &(n, w)) in samples.iter().enumerate() {
            out[i] = p[0] * shape_factor(n) + p[1] - w;
        }
        Ok(())
    };
    let mut jacobian = |_p: &[f64]| -> Result<DMatrix<f64>, FitError> {
        let mut j = DMatrix::zeros(m, 2);
        for (i, &(n, _)) in samples.iter().enumerate() {
            j[(i, 0)] = shape_factor(n);
            j[(i, 1)] = 1.0;
        }
        Ok(j)
    };
    let outcome = lm::minimize(&space, m, &mut residuals, Some(&mut jacobian), options)?;
    let params = LinewidthLawParams::new(outcome.values[0], outcome.values[1].max(0.0))
        .map_err(FitError::Model)?;
    let report = FitReport::from_outcome(outcome, space.names(), options);
    Ok(LinewidthFit { report, params })
}

/// Result of a log–log power-law fit `y = A·xᵇ`.
#[derive(Debug, Clone)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Standard error of the exponent (zero when it was held fixed).
    pub exponent_se: f64,
    /// Standard error of the prefactor, propagated from log space.
    pub prefactor_se: f64,
    /// Residuals in log space, `ln y - (ln A + b·ln x)`, in input order.
    pub log_residuals: Vec<f64>,
}

/// Ordinary least squares of `ln y` on `ln x`. All samples must be
/// positive. With `fixed_exponent` only the prefactor is estimated.
pub fn fit_power_law(
    samples: &[(f64, f64)],
    fixed_exponent: Option<f64>,
) -> Result<PowerLawFit, FitError> {
    if samples.len() < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: samples.len() });
    }
    let mut lx = Vec::with_capacity(samples.len());
    let mut ly = Vec::with_capacity(samples.len());
    for (i, &(x, y)) in samples.iter().enumerate() {
        if !(x > 0.0) || !x.is_finite() {
            return Err(FitError::NonPositiveSample { index: i, value: x });
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(FitError::NonPositiveSample { index: i, value: y });
        }
        lx.push(x.ln());
        ly.push(y.ln());
    }
    let m = samples.len() as f64;
    let mean_x = lx.iter().sum::<f64>() / m;
    let mean_y = ly.iter().sum::<f64>() / m;

    let (slope, intercept, slope_se, intercept_se, residuals);
    match fixed_exponent {
        Some(b) => {
            slope = b;
            intercept = mean_y - b * mean_x;
            let res: Vec<f64> =
                lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
            let dof = (samples.len() - 1).max(1) as f64;
            let s2 = res.iter().map(|r| r * r).sum::<f64>() / dof;
            slope_se = 0.0;
            intercept_se = (s2 / m).sqrt();
            residuals = res;
        }
        None => {
            let sxx: f64 = lx.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
            if sxx <= 0.0 {
                return Err(FitError::DegenerateDesign(
                    "all abscissae coincide; the exponent is unidentifiable".into(),
                ));
            }
            let sxy: f64 =
                lx.iter().zip(&ly).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
            slope = sxy / sxx;
            intercept = mean_y - slope * mean_x;
            let res: Vec<f64> =
                lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
            let dof = (samples.len() - 2).max(1) as f64;
            let s2 = res.iter().map(|r| r * r).sum::<f64>() / dof;
            slope_se = (s2 / sxx).sqrt();
            intercept_se = (s2 * (1.0 / m + mean_x * mean_x / sxx)).sqrt();
            residuals = res;
        }
    }
    let prefactor = intercept.exp();
    Ok(PowerLawFit {
        exponent: slope,
        prefactor,
        exponent_se: slope_se,
        prefactor_se: prefactor * intercept_se,
        log_residuals: residuals,
    })
}
