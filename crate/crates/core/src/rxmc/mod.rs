//! Replica-exchange Monte Carlo over a noise ladder, stepwise thermodynamic
//! integration of the free energy, and peak-count selection.
//!
//! The sampler explores the posterior `π_b(θ) ∝ prior(θ)·exp(-b·n·ε(θ))`
//! at a ladder of inverse noise levels `b = 1/σ²`, where ε is the mean
//! squared residual of the K-peak model. Replicas at adjacent levels swap
//! states with the detailed-balance acceptance rule, which lets cold
//! (small-σ) chains escape local minima through the hot end.
//!
//! The free energy `F(σ) = n·ln σ - ln Ẑ(b)` is accumulated stepwise from
//! the exactly-known `Ẑ(0) = 1` (the normalized prior) through automatic
//! bridge levels up to the user ladder; each step is a log-mean-exponential
//! over the previous level's ε samples. Model selection compares min-σ free
//! energies across candidate peak counts, flagging statistical ties.

mod ensemble;

use rand::Rng;
use thiserror::Error;

use crate::model::{EnergyGrid, ModelError};
use crate::params::ParamSpace;
use crate::peaks::PeakLayout;

pub use ensemble::FreeEnergyCurve;

#[derive(Debug, Error)]
pub enum RxmcError {
    #[error("noise ladder must be strictly decreasing and positive (violated at index {0})")]
    BadLadder(usize),
    #[error("noise ladder needs at least {needed} levels, got {got}")]
    LadderTooShort { needed: usize, got: usize },
    #[error("replica exchange requires adjacent ladder levels, got {0} and {1}")]
    NonAdjacentLevels(usize, usize),
    #[error("prior space does not match the layout: {0}")]
    PriorMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no candidate peak counts supplied")]
    NoCandidates,
}

/// A ladder of noise levels σ, strictly decreasing (hot to cold).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLadder {
    sigmas: Vec<f64>,
}

impl NoiseLadder {
    pub fn new(sigmas: Vec<f64>) -> Result<Self, RxmcError> {
        if sigmas.is_empty() {
            return Err(RxmcError::LadderTooShort { needed: 1, got: 0 });
        }
        for i in 0..sigmas.len() {
            if !(sigmas[i] > 0.0) || !sigmas[i].is_finite() {
                return Err(RxmcError::BadLadder(i));
            }
            if i > 0 && sigmas[i] >= sigmas[i - 1] {
                return Err(RxmcError::BadLadder(i));
            }
        }
        Ok(Self { sigmas })
    }

    /// Geometric ladder from `sigma_hi` down to `sigma_lo` in `count` levels.
    pub fn geometric(sigma_hi: f64, sigma_lo: f64, count: usize) -> Result<Self, RxmcError> {
        if count < 2 {
            return Err(RxmcError::LadderTooShort { needed: 2, got: count });
        }
        if !(sigma_hi > sigma_lo && sigma_lo > 0.0) {
            return Err(RxmcError::BadLadder(0));
        }
        let ratio = (sigma_lo / sigma_hi).powf(1.0 / (count - 1) as f64);
        let sigmas = (0..count).map(|i| sigma_hi * ratio.powi(i as i32)).collect();
        Self::new(sigmas)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// Inverse noise `b = 1/σ²` at `level` (0 is the hottest).
    pub fn inverse_noise(&self, level: usize) -> f64 {
        let s = self.sigmas[level];
        1.0 / (s * s)
    }
}

/// Log posterior density (up to the prior) of a fit with mean squared
/// residual `mse` at noise σ: `-n·ε/σ²`, minus `n·ln σ` when `normalized`.
pub fn log_likelihood(points: usize, mse: f64, sigma: f64, normalized: bool) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    assert!(mse >= 0.0, "mean squared residual cannot be negative");
    let n = points as f64;
    let mut ll = -n * mse / (sigma * sigma);
    if normalized {
        ll -= n * sigma.ln();
    }
    ll
}

/// The sampling target: a spectrum, a parameter layout, and a uniform
/// prior box over the free coordinates.
pub struct Target<'a> {
    spectrum: &'a EnergyGrid,
    layout: &'a PeakLayout,
    lower: Vec<f64>,
    upper: Vec<f64>,
    pinned: Vec<f64>,
    free: Vec<usize>,
}

impl<'a> Target<'a> {
    /// `priors` must name exactly the layout's parameters, in order, and
    /// every free coordinate needs finite bounds (it is a uniform prior).
    pub fn new(
        spectrum: &'a EnergyGrid,
        layout: &'a PeakLayout,
        priors: &ParamSpace,
    ) -> Result<Self, RxmcError> {
        let names = layout.param_names();
        if priors.len() != names.len() {
            return Err(RxmcError::PriorMismatch(format!(
                "expected {} parameters, got {}",
                names.len(),
                priors.len()
            )));
        }
        for (spec, name) in priors.specs().iter().zip(&names) {
            if &spec.name != name {
                return Err(RxmcError::PriorMismatch(format!(
                    "parameter {:?} where the layout expects {:?}",
                    spec.name, name
                )));
            }
            if !spec.is_pinned() && !(spec.lower.is_finite() && spec.upper.is_finite()) {
                return Err(RxmcError::PriorMismatch(format!(
                    "free parameter {:?} needs finite prior bounds",
                    spec.name
                )));
            }
        }
        Ok(Self {
            spectrum,
            layout,
            lower: priors.specs().iter().map(|s| s.lower).collect(),
            upper: priors.specs().iter().map(|s| s.upper).collect(),
            pinned: priors.init_values(),
            free: priors.free_indices(),
        })
    }

    pub fn points(&self) -> usize {
        self.spectrum.len()
    }

    pub fn spectrum(&self) -> &EnergyGrid {
        self.spectrum
    }

    pub fn layout(&self) -> &PeakLayout {
        self.layout
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Mean squared residual of θ against the spectrum.
    pub fn mse(&self, theta: &[f64]) -> Result<f64, RxmcError> {
        let curve = self.layout.eval(theta, self.spectrum.energies())?;
        let data = self.spectrum.values();
        let n = data.len() as f64;
        Ok(curve.iter().zip(data).map(|(m, d)| (m - d) * (m - d)).sum::<f64>() / n)
    }

    /// Uniform draw from the prior box (pinned coordinates keep their value).
    pub fn draw_from_prior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = self.pinned.clone();
        for &j in &self.free {
            theta[j] = rng.gen_range(self.lower[j]..self.upper[j]);
        }
        theta
    }
}

/// One replica: its ladder position, inverse noise, parameters and current
/// mean squared residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub level: usize,
    /// b = 1/σ² (zero is allowed: the prior level).
    pub inverse_noise: f64,
    pub theta: Vec<f64>,
    pub mse: f64,
}

impl ReplicaState {
    /// Fresh replica drawn from the prior.
    pub fn from_prior<R: Rng>(
        target: &Target,
        level: usize,
        inverse_noise: f64,
        rng: &mut R,
    ) -> Result<Self, RxmcError> {
        let theta = target.draw_from_prior(rng);
        let mse = target.mse(&theta)?;
        Ok(Self { level, inverse_noise, theta, mse })
    }
}

/// One Metropolis update of a single coordinate: Gaussian move of width
/// `scale`, uniform-box prior, acceptance `min(1, exp(-b·n·Δε))`.
///
/// Out-of-box proposals are rejected before any accept draw. Returns
/// whether the move was accepted.
pub fn metropolis_step<R: Rng>(
    target: &Target,
    state: &mut ReplicaState,
    param_index: usize,
    scale: f64,
    rng: &mut R,
) -> Result<bool, RxmcError> {
    use rand_distr::StandardNormal;
    let (lower, upper) = target.bounds();
    assert!(param_index < state.theta.len(), "parameter index out of range");
    let old = state.theta[param_index];
    let candidate = old + scale * rng.sample::<f64, _>(StandardNormal);
    if candidate < lower[param_index] || candidate > upper[param_index] {
        return Ok(false);
    }
    state.theta[param_index] = candidate;
    let mse_new = match target.mse(&state.theta) {
        Ok(m) => m,
        Err(e) => {
            state.theta[param_index] = old;
            return Err(e);
        }
    };
    let n = target.points() as f64;
    let log_ratio = -state.inverse_noise * n * (mse_new - state.mse);
    let u: f64 = rng.gen();
    if u < log_ratio.min(0.0).exp() {
        state.mse = mse_new;
        Ok(true)
    } else {
        state.theta[param_index] = old;
        Ok(false)
    }
}

/// Log acceptance exponent for swapping two adjacent replicas:
/// `(b_cold - b_hot)·n·(ε_cold - ε_hot)`. Positive means certain accept —
/// notably whenever the colder replica currently fits *worse*.
pub fn exchange_log_acceptance(
    a: &ReplicaState,
    b: &ReplicaState,
    points: usize,
) -> Result<f64, RxmcError> {
    if a.level.abs_diff(b.level) != 1 {
        return Err(RxmcError::NonAdjacentLevels(a.level, b.level));
    }
    let (hot, cold) =
        if a.inverse_noise <= b.inverse_noise { (a, b) } else { (b, a) };
    Ok((cold.inverse_noise - hot.inverse_noise) * points as f64 * (cold.mse - hot.mse))
}

/// Attempts a replica exchange between adjacent levels, swapping the two
/// parameter states (and their residuals) on acceptance.
pub fn replica_exchange<R: Rng>(
    a: &mut ReplicaState,
    b: &mut ReplicaState,
    points: usize,
    rng: &mut R,
) -> Result<bool, RxmcError> {
    let log_acc = exchange_log_acceptance(a, b, points)?;
    let u: f64 = rng.gen();
    if u < log_acc.min(0.0).exp() {
        std::mem::swap(&mut a.theta, &mut b.theta);
        std::mem::swap(&mut a.mse, &mut b.mse);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Sampler schedule and reproducibility knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RxmcSettings {
    /// Sweeps discarded before sampling; proposal scales adapt only here.
    pub burn_in_sweeps: usize,
    /// Recorded sweeps after burn-in.
    pub sample_sweeps: usize,
    /// Sweeps between replica-exchange passes (set huge to disable).
    pub exchange_interval: usize,
    /// Sweeps between proposal-scale adaptations during burn-in.
    pub adapt_interval: usize,
    /// Parameter samples are kept every `thin` sweeps.
    pub thin: usize,
    /// Master seed; every stream is derived from it.
    pub seed: u64,
    /// Geometric spacing (in b) of automatic bridge levels.
    pub bridge_ratio: f64,
    /// Proposal acceptance targeted by the burn-in adaptation.
    pub target_acceptance: f64,
}

impl Default for RxmcSettings {
    fn default() -> Self {
        Self {
            burn_in_sweeps: 1000,
            sample_sweeps: 2000,
            exchange_interval: 10,
            adapt_interval: 50,
            thin: 5,
            seed: 0,
            bridge_ratio: 1.6,
            target_acceptance: 0.25,
        }
    }
}

/// Summary statistics of one sampled parameter at the selected level.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Runs the replica-exchange sampler and integrates the free energy over
/// the user ladder. See [`FreeEnergyCurve`] for everything it reports.
pub fn free_energy_curve(
    spectrum: &EnergyGrid,
    layout: &PeakLayout,
    priors: &ParamSpace,
    ladder: &NoiseLadder,
    settings: &RxmcSettings,
) -> Result<FreeEnergyCurve, RxmcError> {
    let target = Target::new(spectrum, layout, priors)?;
    ensemble::run(&target, ladder, settings)
}

/// Outcome of comparing candidate peak counts by minimum free energy.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub candidates: Vec<usize>,
    pub curves: Vec<FreeEnergyCurve>,
    /// Candidate with the smallest minimum free energy.
    pub best: usize,
    /// All candidates statistically tied with the best (combined standard
    /// error); more than one entry means the selection is ambiguous.
    pub selected: Vec<usize>,
    pub ambiguous: bool,
}

/// Samples every candidate peak count (in parallel) with priors derived
/// from the data, then picks the count whose free-energy minimum is lowest.
///
/// `template` fixes everything about the layout except the peak count.
/// Duplicate candidates are legal and produce identical curves.
pub fn select_model(
    spectrum: &EnergyGrid,
    template: &PeakLayout,
    candidates: &[usize],
    ladder: &NoiseLadder,
    settings: &RxmcSettings,
) -> Result<SelectionReport, RxmcError> {
    if candidates.is_empty() {
        return Err(RxmcError::NoCandidates);
    }
    let mut layouts = Vec::with_capacity(candidates.len());
    for &k in candidates {
        layouts.push(template.with_peak_count(k)?);
    }
    let results: Vec<Result<FreeEnergyCurve, RxmcError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = layouts
            .iter()
            .map(|layout| {
                scope.spawn(move || {
                    let priors = layout.default_space(spectrum)?;
                    free_energy_curve(spectrum, layout, &priors, ladder, settings)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    let best_idx = (0..out.len())
        .min_by(|&a, &b| out[a].min_free_energy().total_cmp(&out[b].min_free_energy()))
        .expect("at least one candidate");
    let best_f = out[best_idx].min_free_energy();
    let best_se = out[best_idx].min_standard_error();
    let mut selected: Vec<usize> = Vec::new();
    for (i, curve) in out.iter().enumerate() {
        let gap = (curve.min_free_energy() - best_f).abs();
        let band = (curve.min_standard_error().powi(2) + best_se.powi(2)).sqrt();
        if i == best_idx || gap <= band {
            selected.push(candidates[i]);
        }
    }
    selected.sort_unstable();
    selected.dedup();
    Ok(SelectionReport {
        candidates: candidates.to_vec(),
        best: candidates[best_idx],
        ambiguous: selected.len() > 1,
        selected,
        curves: out,
    })
}
