//! Temperature dependence of the band gap and exciton binding energy.
//!
//! Both quantities follow the same single-phonon form
//! `X(T) = X₀ + X_T · (coth(ħω/2k_BT) - 1)`, which reduces exactly to `X₀`
//! at T = 0 and grows linearly in T once `k_BT ≫ ħω`. All energies in this
//! module are meV, temperatures in K.

use thiserror::Error;

use super::{ModelError, KB_MEV_PER_K};

/// Energy of the coupled phonon mode, meV.
pub const PHONON_ENERGY_MEV: f64 = 13.6;

/// Coefficients of the thermal shift model, all in meV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElliottParams {
    /// Band gap at zero temperature, E_g(0).
    pub bandgap_zero: f64,
    /// Band-gap phonon coupling (typically negative: the gap shrinks).
    pub bandgap_coupling: f64,
    /// Binding-energy scale at zero temperature, Ry(0).
    pub rydberg_zero: f64,
    /// Binding-energy phonon coupling.
    pub rydberg_coupling: f64,
    /// Phonon energy ħω in meV.
    pub phonon_energy: f64,
}

impl ElliottParams {
    /// Uses the default phonon energy of [`PHONON_ENERGY_MEV`].
    pub fn new(
        bandgap_zero: f64,
        bandgap_coupling: f64,
        rydberg_zero: f64,
        rydberg_coupling: f64,
    ) -> Result<Self, ModelError> {
        if !(rydberg_zero > 0.0 && rydberg_zero.is_finite()) {
            return Err(ModelError::NonPositive { name: "rydberg_zero", value: rydberg_zero });
        }
        for (name, v) in [
            ("bandgap_zero", bandgap_zero),
            ("bandgap_coupling", bandgap_coupling),
            ("rydberg_coupling", rydberg_coupling),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { name, value: v });
            }
        }
        Ok(Self {
            bandgap_zero,
            bandgap_coupling,
            rydberg_zero,
            rydberg_coupling,
            phonon_energy: PHONON_ENERGY_MEV,
        })
    }

    /// The shared occupation factor `coth(ħω/2k_BT) - 1`; exactly 0 at T = 0.
    pub fn phonon_factor(&self, temperature: f64) -> Result<f64, ModelError> {
        if !(temperature >= 0.0) {
            return Err(ModelError::NegativeTemperature(temperature));
        }
        if temperature == 0.0 {
            return Ok(0.0);
        }
        let x = self.phonon_energy / (2.0 * KB_MEV_PER_K * temperature);
        Ok(coth(x) - 1.0)
    }

    /// Band gap E_g(T) in meV.
    pub fn bandgap_at(&self, temperature: f64) -> Result<f64, ModelError> {
        Ok(self.bandgap_zero + self.bandgap_coupling * self.phonon_factor(temperature)?)
    }

    /// Binding-energy scale Ry(T) in meV.
    pub fn rydberg_at(&self, temperature: f64) -> Result<f64, ModelError> {
        Ok(self.rydberg_zero + self.rydberg_coupling * self.phonon_factor(temperature)?)
    }

    /// Resonance energy E_n(T) = E_g(T) - Ry(T)/(n-δ)² in meV, n ≥ 2.
    pub fn level_energy(&self, n: u32, defect: f64, temperature: f64) -> Result<f64, ModelError> {
        if n < 2 {
            return Err(ModelError::PrincipalTooSmall(n));
        }
        let eff = n as f64 - defect;
        if !defect.is_finite() || eff <= 0.0 {
            return Err(ModelError::DefectTooLarge { n, delta: defect });
        }
        Ok(self.bandgap_at(temperature)? - self.rydberg_at(temperature)? / (eff * eff))
    }
}

/// One measured resonance center: level `n` at `temperature` K with energy
/// in meV. The common exchange row for thermal-series fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterRow {
    pub n: u32,
    pub temperature: f64,
    pub energy: f64,
}

/// Numerically stable coth for x > 0: `1 + 2/(e^{2x} - 1)`, with the series
/// `1/x + x/3` below 1e-6 where the direct form loses digits. Saturates to
/// 1 for large x because `e^{2x}` overflows to infinity.
pub fn coth(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 1e-6 {
        1.0 / x + x / 3.0
    } else {
        1.0 + 2.0 / (2.0 * x).exp_m1()
    }
}

/// Errors specific to temperature-series handling.
#[derive(Debug, Error, PartialEq)]
pub enum CenterTableError {
    #[error("center table needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("center table covers a single temperature; the thermal couplings are unidentifiable")]
    SingleTemperature,
    #[error("center table covers a single level and defects are free; the series is unidentifiable")]
    SingleLevel,
    #[error(transparent)]
    Model(#[from] ModelError),
}
