//! Scaling laws across a resonance series: exciton size and linewidth.

use super::ModelError;

/// Root-mean-square exciton radius `r_n = a_B · (3n² - 2)`, in the units of
/// the supplied Bohr radius `a_B`.
pub fn exciton_radius(n: u32, bohr_radius: f64) -> Result<f64, ModelError> {
    if n < 1 {
        return Err(ModelError::PrincipalTooSmall(n));
    }
    if !(bohr_radius > 0.0 && bohr_radius.is_finite()) {
        return Err(ModelError::NonPositive { name: "bohr_radius", value: bohr_radius });
    }
    let nf = n as f64;
    Ok(bohr_radius * (3.0 * nf * nf - 2.0))
}

/// Linewidth trend `Γ(n) = α·(n² - 1)/n⁵ + β`: a phonon-like decay toward a
/// constant floor β. `amplitude` and `offset` carry the width unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinewidthLawParams {
    pub amplitude: f64,
    pub offset: f64,
}

impl LinewidthLawParams {
    pub fn new(amplitude: f64, offset: f64) -> Result<Self, ModelError> {
        if !amplitude.is_finite() {
            return Err(ModelError::NonFinite { name: "linewidth amplitude", value: amplitude });
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(ModelError::Negative { name: "linewidth offset", value: offset });
        }
        Ok(Self { amplitude, offset })
    }

    /// Γ(n) for n ≥ 1. The n-dependent factor vanishes at n = 1.
    pub fn width(&self, n: u32) -> Result<f64, ModelError> {
        if n < 1 {
            return Err(ModelError::PrincipalTooSmall(n));
        }
        Ok(self.amplitude * shape_factor(n) + self.offset)
    }
}

/// The dimensionless profile `(n² - 1)/n⁵` of the linewidth law.
pub fn shape_factor(n: u32) -> f64 {
    let nf = n as f64;
    (nf * nf - 1.0) / nf.powi(5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn radius_worked_value() {
        // a_B = 1.11 nm, n = 7: 1.11·(3·49 - 2) = 160.95 nm.
        assert_relative_eq!(exciton_radius(7, 1.11).unwrap(), 160.95, max_relative = 1e-13);
    }

    #[test]
    fn radius_at_n1_is_the_bohr_radius() {
        assert_relative_eq!(exciton_radius(1, 1.11).unwrap(), 1.11);
    }

    #[test]
    fn linewidth_worked_value() {
        // α = 1.5, β = 0.05, n = 2: 1.5·3/32 + 0.05 = 0.190625; and the
        // independently computed α = 1.0, β = 0.05, n = 2 case.
        let law = LinewidthLawParams::new(1.0, 0.05).unwrap();
        assert_relative_eq!(law.width(2).unwrap(), 0.14375, max_relative = 1e-15);
    }

    #[test]
    fn linewidth_at_n1_is_the_offset_exactly() {
        let law = LinewidthLawParams::new(3.7, 0.061).unwrap();
        assert_eq!(law.width(1).unwrap(), 0.061);
    }

    #[test]
    fn inputs_below_one_are_rejected() {
        assert!(exciton_radius(0, 1.11).is_err());
        let law = LinewidthLawParams::new(1.0, 0.0).unwrap();
        assert!(law.width(0).is_err());
    }

    proptest! {
        #[test]
        fn radius_grows_with_n(n in 1u32..80) {
            let a = exciton_radius(n, 1.11).unwrap();
            let b = exciton_radius(n + 1, 1.11).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn width_decays_monotonically_beyond_n2_toward_offset(
            amp in 1e-3f64..10.0,
            offset in 0.0f64..1.0,
        ) {
            // (n²-1)/n⁵ peaks at n = 2 over the integers and decays after.
            let law = LinewidthLawParams::new(amp, offset).unwrap();
            let mut prev = law.width(2).unwrap();
            for n in 3..=30 {
                let w = law.width(n).unwrap();
                prop_assert!(w < prev);
                prop_assert!(w > offset);
                prev = w;
            }
        }

        #[test]
        fn shape_factor_peaks_at_n2(n in 3u32..200) {
            prop_assert!(shape_factor(n) < shape_factor(2));
        }
    }
}
