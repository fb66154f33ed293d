//! Analysis toolkit for Rydberg-exciton absorption spectra.
//!
//! The crate is organized around five concerns:
//!
//! - [`model`] — closed-form building blocks (hydrogen-like resonance series
//!   with quantum defects, asymmetric Fano lines, an exponential sub-gap
//!   tail, phonon-driven thermal shifts) and their composition into full
//!   spectra with optional instrumental broadening;
//! - [`synth`] — seeded, bit-reproducible synthetic spectra and thermal
//!   center tables;
//! - [`params`] / [`peaks`] — named parameter vectors with box bounds, and
//!   the flat coordinate layout shared by the fitters and the samplers;
//! - [`lsq`] — bounded Levenberg–Marquardt least squares for spectra,
//!   temperature series, and scaling trends;
//! - [`rxmc`] — replica-exchange Monte Carlo over a noise ladder, stepwise
//!   thermodynamic integration of the free energy, and peak-count selection.
//!
//! Spectral energies are handled in eV end to end; wavelengths appear only
//! at the I/O boundary (see [`model::units`]). Temperature-series energies
//! follow the meV convention of the thermal-shift parameters.

pub mod demo;
pub mod lsq;
pub mod model;
pub mod params;
pub mod peaks;
pub mod rxmc;
pub mod synth;

pub use model::{
    composite_spectrum, EnergyGrid, FanoPeakParams, ModelError, PeakModel, RydbergSeriesParams,
    UrbachParams,
};
pub use params::{ParamError, ParamSpace, ParamSpec};
pub use peaks::{CenterParameterization, PeakLayout};
