//! Reference parameter set for a bulk cuprous-oxide-like crystal.
//!
//! Ten yellow-series resonances (n = 2…11) with tabulated quantum defects,
//! linewidths, asymmetries and oscillator strengths, the matching sub-gap
//! tail, thermal-shift coefficients and linewidth-law offsets. The values
//! reproduce well-characterized bulk measurements and drive the test-suite,
//! the examples and the synthetic-data defaults.

use std::collections::BTreeMap;

use crate::model::elliott::ElliottParams;
use crate::model::units::width_nm_to_ev;
use crate::model::{PeakModel, RydbergSeriesParams};

/// Principal quantum numbers of the tabulated resonances.
pub const PRINCIPAL: [u32; 10] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Quantum defects δ_n for n = 2…11.
pub const DEFECTS: [f64; 10] = [
    0.0096, 0.043, 0.0436, 0.0789, 0.0942, 0.0919, 0.0986, 0.0907, 0.0909, 0.09,
];

/// Full linewidths Γ_n in nm for n = 2…11 (as a spectrometer reports them).
pub const WIDTHS_NM: [f64; 10] = [
    0.66, 0.249, 0.129, 0.0992, 0.0787, 0.0611, 0.0414, 0.0217, 0.0103, 0.0051,
];

/// Fano asymmetry parameters q_n for n = 2…11.
pub const ASYMMETRY: [f64; 10] = [
    3.23, 4.51, 3.64, 5.469, 9.1153, 9.1415, 9.359, 7.4665, 7.2898, 6.666,
];

/// Relative line strengths for n = 2…11, used as the Fano amplitudes C_n.
pub const STRENGTHS: [f64; 10] = [
    0.185, 0.0956, 0.0458, 0.0246, 0.0127, 0.006, 0.003, 0.0014, 0.00076, 0.00014,
];

/// Band gap of the reference series, eV.
pub const BANDGAP_EV: f64 = 2.173;

/// Binding-energy scale of the reference series, eV.
pub const RYDBERG_EV: f64 = 0.0949;

/// Sub-gap tail amplitude and width (eV) of the reference spectrum.
pub const URBACH_AMPLITUDE: f64 = 0.2864;
pub const URBACH_WIDTH_EV: f64 = 0.008;

/// Exciton Bohr radius, nm.
pub const BOHR_RADIUS_NM: f64 = 1.11;

/// Linewidth-law floor β for the bulk crystal, nm.
pub const LINEWIDTH_OFFSET_BULK_NM: f64 = 0.061;

/// The reference resonance series with its defect table.
pub fn bulk_series() -> RydbergSeriesParams {
    let defects: BTreeMap<u32, f64> =
        PRINCIPAL.iter().copied().zip(DEFECTS.iter().copied()).collect();
    RydbergSeriesParams::new(BANDGAP_EV, RYDBERG_EV, defects).expect("reference series is valid")
}

/// The full ten-peak reference model without instrumental broadening.
///
/// Tabulated nm linewidths are converted to eV with the local dispersion at
/// each peak's own center.
pub fn bulk_model() -> PeakModel {
    bulk_model_with_sigma(0.0)
}

/// Same as [`bulk_model`] with an instrumental Gaussian σ in eV.
pub fn bulk_model_with_sigma(sigma_ev: f64) -> PeakModel {
    let series = bulk_series();
    let mut rows = Vec::with_capacity(PRINCIPAL.len());
    for i in 0..PRINCIPAL.len() {
        let n = PRINCIPAL[i];
        let center = series.energy(n).expect("n >= 2");
        let width_ev = width_nm_to_ev(WIDTHS_NM[i], center).expect("positive center");
        rows.push((n, width_ev, STRENGTHS[i], ASYMMETRY[i]));
    }
    PeakModel::from_series(&series, &rows, URBACH_AMPLITUDE, URBACH_WIDTH_EV, sigma_ev)
        .expect("reference model is valid")
}

/// Thermal-shift coefficients of the reference crystal (meV).
pub fn thermal_coefficients() -> ElliottParams {
    ElliottParams::new(2171.7, -29.5, 96.8, -20.9).expect("reference coefficients are valid")
}
