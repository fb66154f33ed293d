//! Forward model for exciton absorption spectra.
//!
//! A spectrum is composed of three ingredients, all expressed as absorption
//! coefficients on an energy axis in eV:
//!
//! - a hydrogen-like resonance series with per-level quantum defects
//!   ([`RydbergSeriesParams`]),
//! - an asymmetric (Fano) lineshape for each resonance ([`FanoPeakParams`]),
//! - an exponential sub-gap tail ([`UrbachParams`]),
//!
//! plus optional Gaussian instrumental broadening applied on a uniform grid.
//! [`composite_spectrum`] evaluates the sum; temperature dependence lives in
//! [`elliott`], cross-series scaling laws in [`scaling`], and wavelength
//! conversions in [`units`].

pub mod elliott;
pub mod scaling;
pub mod units;

use std::collections::BTreeMap;

use thiserror::Error;

/// hc in eV·nm; single source of truth for wavelength–energy conversions.
pub const HC_EV_NM: f64 = 1239.8419843320026;

/// Boltzmann constant in meV/K.
pub const KB_MEV_PER_K: f64 = 0.08617333262;

/// Errors produced while building or evaluating forward models.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("energy and value arrays differ in length ({energies} vs {values})")]
    MismatchedLengths { energies: usize, values: usize },
    #[error("a spectrum needs at least two grid points, got {0}")]
    TooFewPoints(usize),
    #[error("grid energies must be finite and strictly increasing (violated at index {0})")]
    NonMonotonicGrid(usize),
    #[error("non-finite spectrum value at index {0}")]
    NonFiniteValue(usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("quantum defect tables start at n = 2, got n = {0}")]
    DefectBelowSeriesStart(u32),
    #[error("quantum defect {delta} at n = {n} leaves a non-positive effective quantum number")]
    DefectTooLarge { n: u32, delta: f64 },
    #[error("principal quantum number must satisfy n >= 2, got {0}")]
    PrincipalTooSmall(u32),
    #[error("peak centers must be strictly increasing (violated at peak index {0})")]
    CentersNotSorted(usize),
    #[error("peak center {center} eV does not lie below the band gap {bandgap} eV")]
    CenterAboveGap { center: f64, bandgap: f64 },
    #[error("instrumental broadening requires a uniform energy grid")]
    NonUniformGrid,
    #[error("parameter vector does not match the layout (expected {expected}, got {got})")]
    WrongParameterCount { expected: usize, got: usize },
    #[error("temperature must be non-negative, got {0} K")]
    NegativeTemperature(f64),
}

/// A sampled spectrum: strictly increasing energies in eV, one value each.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    energies: Vec<f64>,
    values: Vec<f64>,
}

impl EnergyGrid {
    /// Validates lengths, finiteness and strict monotonicity of the axis.
    pub fn new(energies: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if energies.len() != values.len() {
            return Err(ModelError::MismatchedLengths {
                energies: energies.len(),
                values: values.len(),
            });
        }
        if energies.len() < 2 {
            return Err(ModelError::TooFewPoints(energies.len()));
        }
        validate_axis(&energies)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(i));
        }
        Ok(Self { energies, values })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least two points
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest sampled value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First and last grid energy.
    pub fn span(&self) -> (f64, f64) {
        (self.energies[0], self.energies[self.energies.len() - 1])
    }

    /// Grid spacing if the axis is uniform to within a relative 1e-8.
    pub fn uniform_spacing(&self) -> Option<f64> {
        uniform_spacing(&self.energies)
    }
}

fn validate_axis(energies: &[f64]) -> Result<(), ModelError> {
    for i in 0..energies.len() {
        if !energies[i].is_finite() {
            return Err(ModelError::NonMonotonicGrid(i));
        }
        if i > 0 && energies[i] <= energies[i - 1] {
            return Err(ModelError::NonMonotonicGrid(i));
        }
    }
    Ok(())
}

pub(crate) fn uniform_spacing(energies: &[f64]) -> Option<f64> {
    if energies.len() < 2 {
        return None;
    }
    let h = (energies[energies.len() - 1] - energies[0]) / (energies.len() - 1) as f64;
    if h <= 0.0 || !h.is_finite() {
        return None;
    }
    for w in energies.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-8 * h.abs() {
            return None;
        }
    }
    Some(h)
}

/// A hydrogen-like resonance series `E_n = E_g - Ry / (n - δ_n)²` with an
/// optional per-level quantum defect table. Energies in eV.
#[derive(Debug, Clone, PartialEq)]
pub struct RydbergSeriesParams {
    pub bandgap: f64,
    pub rydberg: f64,
    defects: BTreeMap<u32, f64>,
}

impl RydbergSeriesParams {
    /// `defects` maps principal quantum numbers (n ≥ 2) to δ_n; levels not
    /// listed use δ_n = 0.
    pub fn new(
        bandgap: f64,
        rydberg: f64,
        defects: BTreeMap<u32, f64>,
    ) -> Result<Self, ModelError> {
        if !bandgap.is_finite() {
            return Err(ModelError::NonFinite { name: "bandgap", value: bandgap });
        }
        // Zero binding energy is a legal degenerate limit: every level
        // collapses onto the band gap.
        if !(rydberg >= 0.0 && rydberg.is_finite()) {
            return Err(ModelError::Negative { name: "rydberg", value: rydberg });
        }
        for (&n, &delta) in &defects {
            if n < 2 {
                return Err(ModelError::DefectBelowSeriesStart(n));
            }
            if !delta.is_finite() || n as f64 - delta <= 0.0 {
                return Err(ModelError::DefectTooLarge { n, delta });
            }
        }
        Ok(Self { bandgap, rydberg, defects })
    }

    /// Quantum defect for level `n` (zero when not tabulated).
    pub fn defect(&self, n: u32) -> f64 {
        self.defects.get(&n).copied().unwrap_or(0.0)
    }

    pub fn defects(&self) -> &BTreeMap<u32, f64> {
        &self.defects
    }

    /// Resonance energy `E_n` in eV for n ≥ 2.
    pub fn energy(&self, n: u32) -> Result<f64, ModelError> {
        if n < 2 {
            return Err(ModelError::PrincipalTooSmall(n));
        }
        let eff = n as f64 - self.defect(n);
        // `new` guarantees eff > 0 for tabulated levels; untabulated n ≥ 2 use δ = 0.
        Ok(self.bandgap - self.rydberg / (eff * eff))
    }
}

/// One asymmetric resonance. `width` is the full linewidth Γ (eV) entering
/// the lineshape through Γ/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoPeakParams {
    /// Resonance energy E_n in eV.
    pub center: f64,
    /// Full linewidth Γ in eV.
    pub width: f64,
    /// Overall strength C (same units as the spectrum times eV).
    pub amplitude: f64,
    /// Asymmetry parameter q.
    pub q: f64,
}

impl FanoPeakParams {
    pub fn new(center: f64, width: f64, amplitude: f64, q: f64) -> Result<Self, ModelError> {
        let peak = Self { center, width, amplitude, q };
        peak.validate()?;
        Ok(peak)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.center.is_finite() {
            return Err(ModelError::NonFinite { name: "center", value: self.center });
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(ModelError::NonPositive { name: "width", value: self.width });
        }
        if !self.amplitude.is_finite() {
            return Err(ModelError::NonFinite { name: "amplitude", value: self.amplitude });
        }
        if !self.q.is_finite() {
            return Err(ModelError::NonFinite { name: "q", value: self.q });
        }
        Ok(())
    }

    /// `α(E) = C · (Γ/2 + 2q·(E - E_n)) / ((Γ/2)² + (E - E_n)²)`.
    ///
    /// Negative values are physical (destructive interference with the
    /// continuum) and are not clamped.
    pub fn eval(&self, energy: f64) -> f64 {
        let half = 0.5 * self.width;
        let x = energy - self.center;
        self.amplitude * (half + 2.0 * self.q * x) / (half * half + x * x)
    }
}

/// Exponential sub-gap absorption tail `α(E) = α₀ · exp((E - E_g)/E_u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrbachParams {
    /// Tail amplitude α₀ at the band gap.
    pub amplitude: f64,
    /// Tail width E_u in eV.
    pub width: f64,
    /// Band gap E_g in eV.
    pub bandgap: f64,
}

impl UrbachParams {
    pub fn new(amplitude: f64, width: f64, bandgap: f64) -> Result<Self, ModelError> {
        let tail = Self { amplitude, width, bandgap };
        tail.validate()?;
        Ok(tail)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(ModelError::Negative { name: "urbach amplitude", value: self.amplitude });
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(ModelError::NonPositive { name: "urbach width", value: self.width });
        }
        if !self.bandgap.is_finite() {
            return Err(ModelError::NonFinite { name: "bandgap", value: self.bandgap });
        }
        Ok(())
    }

    pub fn eval(&self, energy: f64) -> f64 {
        self.amplitude * ((energy - self.bandgap) / self.width).exp()
    }
}

/// A complete spectral model: ordered Fano peaks below a band gap, an
/// exponential tail anchored at that gap, and an instrumental Gaussian
/// width (σ in eV; zero disables broadening).
#[derive(Debug, Clone, PartialEq)]
pub struct PeakModel {
    peaks: Vec<FanoPeakParams>,
    pub urbach: UrbachParams,
    instrumental_sigma: f64,
}

impl PeakModel {
    /// Peaks must be strictly ordered by center and lie below the tail's
    /// band gap; σ must be finite and non-negative.
    pub fn new(
        peaks: Vec<FanoPeakParams>,
        urbach: UrbachParams,
        instrumental_sigma: f64,
    ) -> Result<Self, ModelError> {
        urbach.validate()?;
        for (i, peak) in peaks.iter().enumerate() {
            peak.validate()?;
            if i > 0 && peak.center <= peaks[i - 1].center {
                return Err(ModelError::CentersNotSorted(i));
            }
            if peak.center >= urbach.bandgap {
                return Err(ModelError::CenterAboveGap {
                    center: peak.center,
                    bandgap: urbach.bandgap,
                });
            }
        }
        if !(instrumental_sigma >= 0.0 && instrumental_sigma.is_finite()) {
            return Err(ModelError::Negative {
                name: "instrumental sigma",
                value: instrumental_sigma,
            });
        }
        Ok(Self { peaks, urbach, instrumental_sigma })
    }

    /// Builds the peak list from a resonance series: one row per level as
    /// `(n, width, amplitude, q)`. The tail's gap is the series gap.
    pub fn from_series(
        series: &RydbergSeriesParams,
        rows: &[(u32, f64, f64, f64)],
        urbach_amplitude: f64,
        urbach_width: f64,
        instrumental_sigma: f64,
    ) -> Result<Self, ModelError> {
        let mut peaks = Vec::with_capacity(rows.len());
        for &(n, width, amplitude, q) in rows {
            peaks.push(FanoPeakParams::new(series.energy(n)?, width, amplitude, q)?);
        }
        peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
        let urbach = UrbachParams::new(urbach_amplitude, urbach_width, series.bandgap)?;
        Self::new(peaks, urbach, instrumental_sigma)
    }

    pub fn peaks(&self) -> &[FanoPeakParams] {
        &self.peaks
    }

    pub fn instrumental_sigma(&self) -> f64 {
        self.instrumental_sigma
    }

    /// Sum of all peaks and the tail at one energy, before broadening.
    pub fn bare_value(&self, energy: f64) -> f64 {
        let mut v = self.urbach.eval(energy);
        for peak in &self.peaks {
            v += peak.eval(energy);
        }
        v
    }
}

/// Evaluates a model on a grid, applying instrumental broadening when the
/// model carries a non-zero σ (this requires a uniform grid).
pub fn composite_spectrum(model: &PeakModel, energies: &[f64]) -> Result<EnergyGrid, ModelError> {
    if energies.len() < 2 {
        return Err(ModelError::TooFewPoints(energies.len()));
    }
    validate_axis(energies)?;
    let mut values: Vec<f64> = energies.iter().map(|&e| model.bare_value(e)).collect();
    if model.instrumental_sigma > 0.0 {
        let h = uniform_spacing(energies).ok_or(ModelError::NonUniformGrid)?;
        values = gaussian_blur(&values, h, model.instrumental_sigma);
    }
    EnergyGrid::new(energies.to_vec(), values)
}

/// Discrete Gaussian convolution with a unit-sum sampled kernel.
///
/// The kernel is truncated at ±8σ (at least one sample each side) and the
/// signal is zero-padded, so mass near the edges leaks out of the window
/// rather than being reflected.
pub fn gaussian_blur(values: &[f64], spacing: f64, sigma: f64) -> Vec<f64> {
    assert!(spacing > 0.0 && sigma > 0.0, "blur needs positive spacing and sigma");
    let half_width = ((8.0 * sigma / spacing).ceil() as usize).max(1);
    let mut kernel = Vec::with_capacity(2 * half_width + 1);
    for j in -(half_width as i64)..=(half_width as i64) {
        let u = j as f64 * spacing / sigma;
        kernel.push((-0.5 * u * u).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let n = values.len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, weight) in kernel.iter().enumerate() {
            let src = i as i64 + k as i64 - half_width as i64;
            if src >= 0 && (src as usize) < n {
                acc += weight * values[src as usize];
            }
        }
        *o = acc;
    }
    out
}

/// Counts strict local maxima in the interior of a sampled curve.
///
/// A point counts when it is strictly greater than both neighbors; plateau
/// points never count, so noise-free symmetric peaks on symmetric grids are
/// still detected through their single largest sample.
pub fn local_maxima_count(values: &[f64]) -> usize {
    let mut count = 0;
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            count += 1;
        }
    }
    count
}

/// Indices of strict interior local maxima, ascending.
pub fn local_maxima_indices(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            out.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_relative_eq, assert_abs_diff_eq};
    use proptest::prelude::*;

    fn series_2173() -> RydbergSeriesParams {
        RydbergSeriesParams::new(2.173, 0.0949, BTreeMap::new()).unwrap()
    }

    #[test]
    fn rydberg_energy_without_defect() {
        // E_2 = 2.173 - 0.0949/4 exactly when δ_2 = 0.
        let s = series_2173();
        assert_relative_eq!(s.energy(2).unwrap(), 2.173 - 0.0949 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn rydberg_energy_with_reference_defect_matches_the_frozen_value() {
        // E_2 for δ_2 = 0.0096, computed independently with 64-bit floats.
        let mut defects = BTreeMap::new();
        defects.insert(2, 0.0096);
        let s = RydbergSeriesParams::new(2.173, 0.0949, defects).unwrap();
        assert_relative_eq!(s.energy(2).unwrap(), 2.1490455895694834, max_relative = 1e-15);
    }

    #[test]
    fn rydberg_energy_with_defect_shifts_down_less_than_half_spacing() {
        let mut defects = BTreeMap::new();
        defects.insert(3, 0.043);
        let s = RydbergSeriesParams::new(2.173, 0.0949, defects).unwrap();
        let eff: f64 = 3.0 - 0.043;
        assert_relative_eq!(s.energy(3).unwrap(), 2.173 - 0.0949 / (eff * eff));
        // δ > 0 pulls the level below the defect-free position.
        assert!(s.energy(3).unwrap() < 2.173 - 0.0949 / 9.0);
    }

    #[test]
    fn zero_binding_energy_collapses_every_level_onto_the_gap() {
        let s = RydbergSeriesParams::new(2.173, 0.0, BTreeMap::new()).unwrap();
        for n in [2, 3, 7, 40] {
            assert_eq!(s.energy(n).unwrap(), 2.173);
        }
    }

    #[test]
    fn rydberg_series_validation() {
        assert!(matches!(
            RydbergSeriesParams::new(2.173, -0.01, BTreeMap::new()),
            Err(ModelError::Negative { .. })
        ));
        let mut low = BTreeMap::new();
        low.insert(1, 0.0);
        assert!(matches!(
            RydbergSeriesParams::new(2.173, 0.0949, low),
            Err(ModelError::DefectBelowSeriesStart(1))
        ));
        let mut big = BTreeMap::new();
        big.insert(2, 2.5);
        assert!(matches!(
            RydbergSeriesParams::new(2.173, 0.0949, big),
            Err(ModelError::DefectTooLarge { .. })
        ));
        assert!(matches!(series_2173().energy(1), Err(ModelError::PrincipalTooSmall(1))));
    }

    #[test]
    fn fano_value_at_center_is_amplitude_over_half_width() {
        // At E = E_n the lineshape reduces to C/(Γ/2) regardless of q.
        let p = FanoPeakParams::new(2.15, 0.002, 0.01, 5.0).unwrap();
        assert_relative_eq!(p.eval(2.15), 10.0, max_relative = 1e-15);
    }

    #[test]
    fn fano_worked_value_off_center() {
        // Hand-checked: C=1, Γ=0.002, q=2, E-E_n = 0.001 gives
        // (0.001 + 2·2·0.001)/(0.001² + 0.001²) = 0.005/2e-6 = 2500.
        let p = FanoPeakParams::new(2.0, 0.002, 1.0, 2.0).unwrap();
        assert_relative_eq!(p.eval(2.001), 2500.0, max_relative = 1e-12);
    }

    #[test]
    fn fano_can_go_negative() {
        let p = FanoPeakParams::new(2.0, 0.002, 1.0, 2.0).unwrap();
        // Below the center the 2q(E-E_n) term dominates and flips the sign.
        assert!(p.eval(1.999) < 0.0);
    }

    #[test]
    fn urbach_worked_value() {
        // α₀=0.2864, E_u=0.008 eV, E-E_g = -0.016: 0.2864·e⁻² (independently computed).
        let u = UrbachParams::new(0.2864, 0.008, 2.173).unwrap();
        assert_relative_eq!(u.eval(2.157), 0.038760025118965875, max_relative = 1e-15);
    }

    #[test]
    fn urbach_equals_amplitude_at_gap() {
        let u = UrbachParams::new(0.2864, 0.008, 2.173).unwrap();
        assert_relative_eq!(u.eval(2.173), 0.2864);
    }

    #[test]
    fn peak_model_rejects_unordered_or_above_gap_centers() {
        let urbach = UrbachParams::new(0.1, 0.008, 2.173).unwrap();
        let a = FanoPeakParams::new(2.15, 0.002, 1.0, 0.0).unwrap();
        let b = FanoPeakParams::new(2.14, 0.002, 1.0, 0.0).unwrap();
        assert!(matches!(
            PeakModel::new(vec![a, b], urbach, 0.0),
            Err(ModelError::CentersNotSorted(1))
        ));
        let above = FanoPeakParams::new(2.20, 0.002, 1.0, 0.0).unwrap();
        assert!(matches!(
            PeakModel::new(vec![above], urbach, 0.0),
            Err(ModelError::CenterAboveGap { .. })
        ));
    }

    #[test]
    fn grid_validation_catches_disorder_and_nonfinite() {
        assert!(matches!(
            EnergyGrid::new(vec![1.0, 1.0, 2.0], vec![0.0; 3]),
            Err(ModelError::NonMonotonicGrid(1))
        ));
        assert!(matches!(
            EnergyGrid::new(vec![1.0, 2.0], vec![0.0, f64::NAN]),
            Err(ModelError::NonFiniteValue(1))
        ));
        assert!(matches!(
            EnergyGrid::new(vec![1.0], vec![0.0]),
            Err(ModelError::TooFewPoints(1))
        ));
    }

    #[test]
    fn uniform_spacing_detects_jitter() {
        let g = EnergyGrid::new(vec![1.0, 1.1, 1.2, 1.3], vec![0.0; 4]).unwrap();
        assert_abs_diff_eq!(g.uniform_spacing().unwrap(), 0.1, epsilon = 1e-12);
        let g = EnergyGrid::new(vec![1.0, 1.1, 1.25, 1.3], vec![0.0; 4]).unwrap();
        assert!(g.uniform_spacing().is_none());
    }

    #[test]
    fn blur_kernel_preserves_mass_away_from_edges() {
        // A centered spike keeps unit mass; the kernel sums to one.
        let n = 201;
        let mut spike = vec![0.0; n];
        spike[100] = 1.0;
        let out = gaussian_blur(&spike, 1.0, 3.0);
        let mass: f64 = out.iter().sum();
        assert_relative_eq!(mass, 1.0, max_relative = 1e-12);
        // Symmetric around the spike.
        assert_relative_eq!(out[95], out[105], max_relative = 1e-12);
        assert!(out[100] > out[99]);
    }

    #[test]
    fn blur_requires_uniform_grid() {
        let model = PeakModel::new(
            vec![FanoPeakParams::new(2.15, 0.002, 1.0, 0.0).unwrap()],
            UrbachParams::new(0.1, 0.008, 2.173).unwrap(),
            1e-4,
        )
        .unwrap();
        let err = composite_spectrum(&model, &[2.10, 2.11, 2.125, 2.13]).unwrap_err();
        assert_eq!(err, ModelError::NonUniformGrid);
    }

    #[test]
    fn composite_without_blur_is_pointwise_sum() {
        let model = PeakModel::new(
            vec![FanoPeakParams::new(2.15, 0.002, 0.01, 1.0).unwrap()],
            UrbachParams::new(0.2864, 0.008, 2.173).unwrap(),
            0.0,
        )
        .unwrap();
        let grid = composite_spectrum(&model, &[2.149, 2.150, 2.151]).unwrap();
        for (i, &e) in grid.energies().iter().enumerate() {
            let expect = model.peaks()[0].eval(e) + model.urbach.eval(e);
            assert_relative_eq!(grid.values()[i], expect, max_relative = 1e-15);
        }
    }

    #[test]
    fn local_maxima_counting() {
        assert_eq!(local_maxima_count(&[0.0, 1.0, 0.0, 2.0, 1.0]), 2);
        assert_eq!(local_maxima_count(&[0.0, 1.0, 1.0, 0.0]), 0); // plateau
        assert_eq!(local_maxima_indices(&[0.0, 1.0, 0.0, 2.0, 1.0]), vec![1, 3]);
    }

    proptest! {
        #[test]
        fn fano_mirror_symmetry_in_q(
            c in 0.5f64..3.0,
            w in 1e-4f64..1e-2,
            q in -10.0f64..10.0,
            dx in -0.05f64..0.05,
        ) {
            // Flipping q mirrors the lineshape around the center.
            let plus = FanoPeakParams::new(c, w, 1.0, q).unwrap();
            let minus = FanoPeakParams::new(c, w, 1.0, -q).unwrap();
            let a = plus.eval(c + dx);
            let b = minus.eval(c - dx);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
        }

        #[test]
        fn fano_scales_linearly_in_amplitude(
            amp in 0.0f64..10.0,
            dx in -0.01f64..0.01,
        ) {
            let unit = FanoPeakParams::new(2.0, 1e-3, 1.0, 3.0).unwrap();
            let scaled = FanoPeakParams::new(2.0, 1e-3, amp, 3.0).unwrap();
            let e = 2.0 + dx;
            prop_assert!((scaled.eval(e) - amp * unit.eval(e)).abs() <= 1e-9 * unit.eval(e).abs().max(1.0));
        }

        #[test]
        fn series_energies_increase_with_n_and_stay_below_gap(
            gap in 1.0f64..3.0,
            ry in 0.01f64..0.2,
        ) {
            let s = RydbergSeriesParams::new(gap, ry, BTreeMap::new()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for n in 2..=20 {
                let e = s.energy(n).unwrap();
                prop_assert!(e > prev);
                prop_assert!(e < gap);
                prev = e;
            }
        }

        #[test]
        fn urbach_is_positive_and_increasing(
            amp in 1e-6f64..10.0,
            width in 1e-4f64..0.1,
            // Offsets measured in widths keep the exponent representable;
            // far below the edge the tail underflows to an exact zero.
            offset_units in -80.0f64..40.0,
            step_units in 0.1f64..20.0,
        ) {
            let u = UrbachParams::new(amp, width, 2.0).unwrap();
            let lo = u.eval(2.0 + offset_units * width);
            let hi = u.eval(2.0 + (offset_units + step_units) * width);
            prop_assert!(lo > 0.0);
            prop_assert!(hi > lo);
        }

        #[test]
        fn blur_keeps_total_mass_for_interior_signal(
            sigma in 0.5f64..4.0,
            at in 60usize..140,
        ) {
            let mut v = vec![0.0; 200];
            v[at] = 2.5;
            let out = gaussian_blur(&v, 1.0, sigma);
            let mass: f64 = out.iter().sum();
            prop_assert!((mass - 2.5).abs() < 1e-9);
        }
    }
}
