//! Wavelength–energy conversions for the I/O boundary.
//!
//! The toolkit computes in eV throughout; spectrometer-style data arrives in
//! nm and is converted on ingest. Linewidths transform with the local
//! dispersion `|dλ/dE| = λ²/hc = hc/E²` evaluated at a stated anchor energy
//! (conventionally the peak center).

use super::{ModelError, HC_EV_NM};

/// λ (nm) → E (eV).
pub fn wavelength_to_energy(wavelength_nm: f64) -> Result<f64, ModelError> {
    if !(wavelength_nm > 0.0 && wavelength_nm.is_finite()) {
        return Err(ModelError::NonPositive { name: "wavelength", value: wavelength_nm });
    }
    Ok(HC_EV_NM / wavelength_nm)
}

/// E (eV) → λ (nm).
pub fn energy_to_wavelength(energy_ev: f64) -> Result<f64, ModelError> {
    if !(energy_ev > 0.0 && energy_ev.is_finite()) {
        return Err(ModelError::NonPositive { name: "energy", value: energy_ev });
    }
    Ok(HC_EV_NM / energy_ev)
}

/// Width ΔE (eV) → Δλ (nm) at a peak centered at `center_ev`.
pub fn width_ev_to_nm(width_ev: f64, center_ev: f64) -> Result<f64, ModelError> {
    if !(center_ev > 0.0 && center_ev.is_finite()) {
        return Err(ModelError::NonPositive { name: "center energy", value: center_ev });
    }
    if !(width_ev >= 0.0 && width_ev.is_finite()) {
        return Err(ModelError::Negative { name: "width", value: width_ev });
    }
    Ok(width_ev * HC_EV_NM / (center_ev * center_ev))
}

/// Width Δλ (nm) → ΔE (eV) at a peak centered at `center_ev`.
pub fn width_nm_to_ev(width_nm: f64, center_ev: f64) -> Result<f64, ModelError> {
    if !(center_ev > 0.0 && center_ev.is_finite()) {
        return Err(ModelError::NonPositive { name: "center energy", value: center_ev });
    }
    if !(width_nm >= 0.0 && width_nm.is_finite()) {
        return Err(ModelError::Negative { name: "width", value: width_nm });
    }
    Ok(width_nm * center_ev * center_ev / HC_EV_NM)
}
