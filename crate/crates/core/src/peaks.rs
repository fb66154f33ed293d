//! Flat parameter layouts for K-peak spectra.
//!
//! A [`PeakLayout`] fixes the meaning and order of every coordinate in a
//! parameter vector θ, so the least-squares objective, its Jacobian, and
//! the Monte-Carlo samplers all speak about the same space.
//!
//! Two center parameterizations exist:
//!
//! - **Free**: every peak carries its own center, width, amplitude and
//!   asymmetry. Layout: `[center_i, width_i, amp_i, q_i] × K`, then the
//!   optional background block `[urbach_amp, urbach_width, bandgap]`, then
//!   the optional instrumental `sigma_instr`.
//! - **Tied**: centers follow the resonance series `E_g - Ry/(n-δ_n)²`.
//!   Layout: `[bandgap, rydberg]`, then `defect_n × K`, then
//!   `[width_n, amp_n, q_n] × K`, then the optional `[urbach_amp,
//!   urbach_width]` (the tail reuses the series gap), then `sigma_instr`.

use nalgebra::DMatrix;

use crate::model::{
    gaussian_blur, uniform_spacing, EnergyGrid, FanoPeakParams, ModelError, UrbachParams,
};
use crate::params::{ParamSpace, ParamSpec};

/// How peak centers are parameterized.
#[derive(Debug, Clone, PartialEq)]
pub enum CenterParameterization {
    /// Independent center per peak.
    Free,
    /// Centers tied to a resonance series; one entry per peak, ascending n.
    Tied { principal: Vec<u32> },
}

/// Which curve components a single coordinate touches; drives incremental
/// recomputation in the samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamImpact {
    /// Exactly one additive component (peak index, or the background).
    Component(usize),
    /// Everything (series parameters, instrumental width).
    Global,
}

/// The coordinate layout of a K-peak model.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakLayout {
    pub centers: CenterParameterization,
    pub peak_count: usize,
    /// Include the exponential sub-gap background block.
    pub background: bool,
    /// Treat the instrumental σ as a fitted coordinate.
    pub fit_sigma: bool,
    /// Instrumental σ in eV used when `fit_sigma` is false (0 disables).
    pub fixed_sigma: f64,
}

impl PeakLayout {
    /// Free-center layout with a background and no instrumental broadening.
    pub fn free(peak_count: usize) -> Self {
        Self {
            centers: CenterParameterization::Free,
            peak_count,
            background: true,
            fit_sigma: false,
            fixed_sigma: 0.0,
        }
    }

    /// Series-tied layout over an explicit list of levels (ascending n ≥ 2).
    pub fn tied(principal: Vec<u32>) -> Result<Self, ModelError> {
        if principal.is_empty() {
            return Err(ModelError::TooFewPoints(0));
        }
        for (i, &n) in principal.iter().enumerate() {
            if n < 2 {
                return Err(ModelError::PrincipalTooSmall(n));
            }
            if i > 0 && n <= principal[i - 1] {
                return Err(ModelError::CentersNotSorted(i));
            }
        }
        Ok(Self {
            peak_count: principal.len(),
            centers: CenterParameterization::Tied { principal },
            background: true,
            fit_sigma: false,
            fixed_sigma: 0.0,
        })
    }

    /// Series-tied layout for `count` consecutive levels from `n_start`.
    pub fn tied_range(n_start: u32, count: usize) -> Result<Self, ModelError> {
        Self::tied((0..count as u32).map(|i| n_start + i).collect())
    }

    pub fn without_background(mut self) -> Self {
        self.background = false;
        self
    }

    pub fn with_fixed_sigma(mut self, sigma_ev: f64) -> Self {
        self.fit_sigma = false;
        self.fixed_sigma = sigma_ev;
        self
    }

    pub fn with_fitted_sigma(mut self) -> Self {
        self.fit_sigma = true;
        self
    }

    /// The same layout with a different peak count. Tied layouts keep their
    /// first principal quantum number and span `count` consecutive levels.
    pub fn with_peak_count(&self, count: usize) -> Result<Self, ModelError> {
        match &self.centers {
            CenterParameterization::Free => {
                let mut out = self.clone();
                out.peak_count = count;
                Ok(out)
            }
            CenterParameterization::Tied { principal } => {
                let mut out = Self::tied_range(principal[0], count)?;
                out.background = self.background;
                out.fit_sigma = self.fit_sigma;
                out.fixed_sigma = self.fixed_sigma;
                Ok(out)
            }
        }
    }

    fn is_tied(&self) -> bool {
        matches!(self.centers, CenterParameterization::Tied { .. })
    }

    fn principal(&self) -> Option<&[u32]> {
        match &self.centers {
            CenterParameterization::Tied { principal } => Some(principal),
            CenterParameterization::Free => None,
        }
    }

    pub fn param_count(&self) -> usize {
        let k = self.peak_count;
        let peaks = if self.is_tied() { 2 + 4 * k } else { 4 * k };
        let background = if self.background {
            if self.is_tied() {
                2
            } else {
                3
            }
        } else {
            0
        };
        peaks + background + usize::from(self.fit_sigma)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.param_count());
        match &self.centers {
            CenterParameterization::Free => {
                for i in 1..=self.peak_count {
                    names.push(format!("center_{i}"));
                    names.push(format!("width_{i}"));
                    names.push(format!("amp_{i}"));
                    names.push(format!("q_{i}"));
                }
                if self.background {
                    names.push("urbach_amp".into());
                    names.push("urbach_width".into());
                    names.push("bandgap".into());
                }
            }
            CenterParameterization::Tied { principal } => {
                names.push("bandgap".into());
                names.push("rydberg".into());
                for &n in principal {
                    names.push(format!("defect_{n}"));
                }
                for &n in principal {
                    names.push(format!("width_{n}"));
                    names.push(format!("amp_{n}"));
                    names.push(format!("q_{n}"));
                }
                if self.background {
                    names.push("urbach_amp".into());
                    names.push("urbach_width".into());
                }
            }
        }
        if self.fit_sigma {
            names.push("sigma_instr".into());
        }
        names
    }

    /// Index of the instrumental σ coordinate, when fitted.
    pub fn sigma_index(&self) -> Option<usize> {
        self.fit_sigma.then(|| self.param_count() - 1)
    }

    /// Indices `(amplitude, width, bandgap)` of the background block.
    pub fn background_indices(&self) -> Option<(usize, usize, usize)> {
        if !self.background {
            return None;
        }
        let k = self.peak_count;
        Some(if self.is_tied() {
            // The series bandgap doubles as the background edge.
            (2 + 4 * k, 2 + 4 * k + 1, 0)
        } else {
            (4 * k, 4 * k + 1, 4 * k + 2)
        })
    }

    /// Additive curve components: one per peak plus the background.
    pub fn component_count(&self) -> usize {
        self.peak_count + usize::from(self.background)
    }

    pub fn impact_of(&self, param_index: usize) -> ParamImpact {
        let k = self.peak_count;
        if Some(param_index) == self.sigma_index() {
            return ParamImpact::Global;
        }
        match &self.centers {
            CenterParameterization::Free => {
                if param_index < 4 * k {
                    ParamImpact::Component(param_index / 4)
                } else {
                    // urbach_amp / urbach_width / bandgap all live in the tail.
                    ParamImpact::Component(k)
                }
            }
            CenterParameterization::Tied { .. } => {
                if param_index < 2 {
                    ParamImpact::Global // series gap and Rydberg move every center
                } else if param_index < 2 + k {
                    ParamImpact::Component(param_index - 2)
                } else if param_index < 2 + 4 * k {
                    ParamImpact::Component((param_index - 2 - k) / 3)
                } else {
                    ParamImpact::Component(k)
                }
            }
        }
    }

    /// The peak described by θ at `peak` (0-based).
    pub fn peak_at(&self, theta: &[f64], peak: usize) -> Result<FanoPeakParams, ModelError> {
        self.check_theta_len(theta)?;
        match &self.centers {
            CenterParameterization::Free => {
                let b = 4 * peak;
                Ok(FanoPeakParams {
                    center: theta[b],
                    width: theta[b + 1],
                    amplitude: theta[b + 2],
                    q: theta[b + 3],
                })
            }
            CenterParameterization::Tied { principal } => {
                let n = principal[peak];
                let delta = theta[2 + peak];
                let eff = n as f64 - delta;
                if !delta.is_finite() || eff <= 0.0 {
                    return Err(ModelError::DefectTooLarge { n, delta });
                }
                let center = theta[0] - theta[1] / (eff * eff);
                let b = 2 + self.peak_count + 3 * peak;
                Ok(FanoPeakParams {
                    center,
                    width: theta[b],
                    amplitude: theta[b + 1],
                    q: theta[b + 2],
                })
            }
        }
    }

    /// All peak centers implied by θ, in layout order.
    pub fn centers_of(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        (0..self.peak_count).map(|i| Ok(self.peak_at(theta, i)?.center)).collect()
    }

    fn urbach_of(&self, theta: &[f64]) -> Option<UrbachParams> {
        self.background_indices().map(|(a, w, g)| UrbachParams {
            amplitude: theta[a],
            width: theta[w],
            bandgap: theta[g],
        })
    }

    /// Effective instrumental σ for θ.
    pub fn sigma_of(&self, theta: &[f64]) -> f64 {
        match self.sigma_index() {
            Some(i) => theta[i],
            None => self.fixed_sigma,
        }
    }

    fn check_theta_len(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.param_count() {
            return Err(ModelError::WrongParameterCount {
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Validates θ: length, finite entries, positive widths, σ ≥ 0.
    pub fn check_theta(&self, theta: &[f64]) -> Result<(), ModelError> {
        self.check_theta_len(theta)?;
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(i));
        }
        for i in 0..self.peak_count {
            self.peak_at(theta, i)?.validate()?;
        }
        if let Some(u) = self.urbach_of(theta) {
            u.validate()?;
        }
        let sigma = self.sigma_of(theta);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ModelError::Negative { name: "instrumental sigma", value: sigma });
        }
        Ok(())
    }

    /// Evaluates the model curve for θ on `energies` into `out`.
    pub fn eval_into(
        &self,
        theta: &[f64],
        energies: &[f64],
        out: &mut Vec<f64>,
    ) -> Result<(), ModelError> {
        self.check_theta(theta)?;
        out.clear();
        out.resize(energies.len(), 0.0);
        if let Some(u) = self.urbach_of(theta) {
            for (o, &e) in out.iter_mut().zip(energies) {
                *o = u.eval(e);
            }
        }
        for i in 0..self.peak_count {
            let p = self.peak_at(theta, i)?;
            for (o, &e) in out.iter_mut().zip(energies) {
                *o += p.eval(e);
            }
        }
        self.apply_blur(theta, energies, out)
    }

    pub fn eval(&self, theta: &[f64], energies: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::new();
        self.eval_into(theta, energies, &mut out)?;
        Ok(out)
    }

    /// Evaluates one additive component (peak `c`, or the background when
    /// `c == peak_count`), broadened like the full curve.
    pub fn component_curve(
        &self,
        theta: &[f64],
        energies: &[f64],
        component: usize,
        out: &mut Vec<f64>,
    ) -> Result<(), ModelError> {
        self.check_theta_len(theta)?;
        out.clear();
        out.resize(energies.len(), 0.0);
        if component < self.peak_count {
            let p = self.peak_at(theta, component)?;
            p.validate()?;
            for (o, &e) in out.iter_mut().zip(energies) {
                *o = p.eval(e);
            }
        } else if self.background && component == self.peak_count {
            let u = self.urbach_of(theta).expect("background block exists");
            u.validate()?;
            for (o, &e) in out.iter_mut().zip(energies) {
                *o = u.eval(e);
            }
        } else {
            return Err(ModelError::WrongParameterCount {
                expected: self.component_count(),
                got: component,
            });
        }
        self.apply_blur(theta, energies, out)
    }

    fn apply_blur(
        &self,
        theta: &[f64],
        energies: &[f64],
        out: &mut Vec<f64>,
    ) -> Result<(), ModelError> {
        let sigma = self.sigma_of(theta);
        if sigma > 0.0 {
            let h = uniform_spacing(energies).ok_or(ModelError::NonUniformGrid)?;
            *out = gaussian_blur(out, h, sigma);
        }
        Ok(())
    }

    /// Analytic Jacobian ∂curve/∂θ (m×p, full layout including pinned
    /// coordinates). Returns `None` when σ is fitted — the convolution
    /// width has no closed-form column here, so callers fall back to finite
    /// differences.
    pub fn jacobian(
        &self,
        theta: &[f64],
        energies: &[f64],
    ) -> Result<Option<DMatrix<f64>>, ModelError> {
        if self.fit_sigma {
            return Ok(None);
        }
        self.check_theta(theta)?;
        let m = energies.len();
        let p = self.param_count();
        let mut jac = DMatrix::<f64>::zeros(m, p);
        let k = self.peak_count;

        for i in 0..k {
            let peak = self.peak_at(theta, i)?;
            let half = 0.5 * peak.width;
            // Column indices for this peak's own block.
            let (w_col, a_col, q_col, center_col) = match &self.centers {
                CenterParameterization::Free => (4 * i + 1, 4 * i + 2, 4 * i + 3, Some(4 * i)),
                CenterParameterization::Tied { .. } => {
                    let b = 2 + k + 3 * i;
                    (b, b + 1, b + 2, None)
                }
            };
            for (r, &e) in energies.iter().enumerate() {
                let x = e - peak.center;
                let num = half + 2.0 * peak.q * x;
                let den = half * half + x * x;
                jac[(r, a_col)] = num / den;
                jac[(r, q_col)] = 2.0 * peak.amplitude * x / den;
                jac[(r, w_col)] =
                    peak.amplitude * (0.5 * den - num * half) / (den * den);
                let d_center =
                    2.0 * peak.amplitude * (num * x - peak.q * den) / (den * den);
                match (&self.centers, center_col) {
                    (CenterParameterization::Free, Some(c)) => jac[(r, c)] = d_center,
                    (CenterParameterization::Tied { principal }, _) => {
                        let eff = principal[i] as f64 - theta[2 + i];
                        jac[(r, 0)] += d_center; // ∂E_c/∂E_g = 1
                        jac[(r, 1)] += d_center * (-1.0 / (eff * eff));
                        jac[(r, 2 + i)] = d_center * (-2.0 * theta[1] / (eff * eff * eff));
                    }
                    _ => unreachable!(),
                }
            }
        }

        if let Some((a_idx, w_idx, g_idx)) = self.background_indices() {
            let u = self.urbach_of(theta).expect("background block exists");
            for (r, &e) in energies.iter().enumerate() {
                let arg = (e - u.bandgap) / u.width;
                let grow = arg.exp();
                let value = u.amplitude * grow;
                jac[(r, a_idx)] += grow;
                jac[(r, w_idx)] += -value * arg / u.width;
                jac[(r, g_idx)] += -value / u.width;
            }
        }

        // The convolution is linear, so columns broaden like the curve.
        let sigma = self.sigma_of(theta);
        if sigma > 0.0 {
            let h = uniform_spacing(energies).ok_or(ModelError::NonUniformGrid)?;
            for c in 0..p {
                let col: Vec<f64> = jac.column(c).iter().copied().collect();
                let blurred = gaussian_blur(&col, h, sigma);
                for (r, v) in blurred.into_iter().enumerate() {
                    jac[(r, c)] = v;
                }
            }
        }
        Ok(Some(jac))
    }

    /// θ with peak blocks sorted by ascending center (free mode only; the
    /// tied ordering is already canonical). Ties break toward smaller |q|.
    pub fn canonicalize(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        let perm = self.canonical_permutation(theta)?;
        Ok(perm.iter().map(|&j| theta[j]).collect())
    }

    /// Permutation `new_index -> old_index` realizing [`Self::canonicalize`].
    pub fn canonical_permutation(&self, theta: &[f64]) -> Result<Vec<usize>, ModelError> {
        self.check_theta_len(theta)?;
        let p = self.param_count();
        if self.is_tied() {
            return Ok((0..p).collect());
        }
        let mut order: Vec<usize> = (0..self.peak_count).collect();
        order.sort_by(|&a, &b| {
            let (ca, qa) = (theta[4 * a], theta[4 * a + 3].abs());
            let (cb, qb) = (theta[4 * b], theta[4 * b + 3].abs());
            ca.total_cmp(&cb).then(qa.total_cmp(&qb))
        });
        let mut perm = Vec::with_capacity(p);
        for &peak in &order {
            perm.extend_from_slice(&[4 * peak, 4 * peak + 1, 4 * peak + 2, 4 * peak + 3]);
        }
        perm.extend(4 * self.peak_count..p);
        Ok(perm)
    }

    /// A deterministic starting [`ParamSpace`] derived from the data alone:
    /// a coarse series scan seeds the centers, local curvature seeds widths
    /// and amplitudes, and the bounds double as the default sampling box.
    pub fn default_space(&self, spectrum: &EnergyGrid) -> Result<ParamSpace, ModelError> {
        let (emin, emax) = spectrum.span();
        let span = emax - emin;
        let h = span / (spectrum.len() - 1) as f64;
        let data = spectrum.values();
        let dmax = spectrum.max_value();
        let dmin = data.iter().copied().fold(f64::INFINITY, f64::min);
        let val_hi = 2.0 * dmax.abs().max(1e-6);
        // Peak amplitudes are area-like (height = C/(Γ/2); a Lorentzian of
        // amplitude C carries area πC), so bound them by the integrated
        // signal rather than its maximum value.
        let area: f64 = data.iter().map(|d| d.abs()).sum::<f64>() * h;
        let amp_hi = (2.0 * area / std::f64::consts::PI).max(1e-6);
        let width_lo = (0.25 * h).max(1e-12);
        let width_hi = 0.5 * span;

        let n_start = self.principal().map_or(2, |p| p[0]);
        let smooth = denoised_values(spectrum);
        let seed = series_seed(spectrum, &smooth, self.peak_count, n_start);

        let mut specs: Vec<ParamSpec> = Vec::with_capacity(self.param_count());
        match &self.centers {
            CenterParameterization::Free => {
                let centers = free_center_seed(spectrum, &smooth, self.peak_count, &seed);
                for (i, &c) in centers.iter().enumerate() {
                    let (w0, a0) = local_peak_seed(spectrum, c, dmin, h);
                    let idx = i + 1;
                    specs.push(ParamSpec::bounded(format!("center_{idx}"), c, emin, emax));
                    specs.push(ParamSpec::bounded(
                        format!("width_{idx}"),
                        w0.clamp(width_lo, width_hi),
                        width_lo,
                        width_hi,
                    ));
                    specs.push(ParamSpec::bounded(
                        format!("amp_{idx}"),
                        a0.clamp(0.0, amp_hi),
                        0.0,
                        amp_hi,
                    ));
                    specs.push(ParamSpec::bounded(format!("q_{idx}"), 0.0, -50.0, 50.0));
                }
            }
            CenterParameterization::Tied { principal } => {
                specs.push(ParamSpec::bounded("bandgap", seed.0, emin, emax + 2.0 * span));
                specs.push(ParamSpec::bounded("rydberg", seed.1, 0.05 * span, 10.0 * span));
                for &n in principal {
                    specs.push(ParamSpec::bounded(format!("defect_{n}"), 0.0, -0.5, 0.9));
                }
                for (i, &n) in principal.iter().enumerate() {
                    let c = seed.2[i];
                    let (w0, a0) = local_peak_seed(spectrum, c, dmin, h);
                    specs.push(ParamSpec::bounded(
                        format!("width_{n}"),
                        w0.clamp(width_lo, width_hi),
                        width_lo,
                        width_hi,
                    ));
                    specs.push(ParamSpec::bounded(
                        format!("amp_{n}"),
                        a0.clamp(0.0, amp_hi),
                        0.0,
                        amp_hi,
                    ));
                    specs.push(ParamSpec::bounded(format!("q_{n}"), 0.0, -50.0, 50.0));
                }
            }
        }
        if self.background {
            let tail0 = data[0].clamp(1e-6, val_hi);
            specs.push(ParamSpec::bounded("urbach_amp", tail0, 0.0, val_hi));
            specs.push(ParamSpec::bounded("urbach_width", span / 5.0, 1e-6, 10.0 * span.max(1e-3)));
            if !self.is_tied() {
                specs.push(ParamSpec::bounded("bandgap", seed.0, emin, emax + 2.0 * span));
            }
        }
        if self.fit_sigma {
            specs.push(ParamSpec::bounded("sigma_instr", 0.0, 0.0, 10.0 * h));
        }
        // Names are generated unique and every init is clamped into its
        // bounds above, so construction cannot fail.
        Ok(ParamSpace::new(specs).expect("auto-initialized space is consistent"))
    }
}

/// Linear interpolation of spectrum values at `energy` (clamped to range).
fn interp(spectrum: &EnergyGrid, energy: f64) -> f64 {
    let e = spectrum.energies();
    let v = spectrum.values();
    if energy <= e[0] {
        return v[0];
    }
    if energy >= e[e.len() - 1] {
        return v[v.len() - 1];
    }
    let i = e.partition_point(|&x| x <= energy).min(e.len() - 1);
    let (e0, e1) = (e[i - 1], e[i]);
    let t = (energy - e0) / (e1 - e0);
    v[i - 1] * (1.0 - t) + v[i] * t
}

/// Lightly smoothed copy of the data used for seeding only: strict local
/// maxima of raw noisy samples include every noise wiggle, while a
/// three-sample Gaussian keeps genuine resonances and their ranking.
fn denoised_values(spectrum: &EnergyGrid) -> Vec<f64> {
    match uniform_spacing(spectrum.energies()) {
        Some(h) => gaussian_blur(spectrum.values(), h, 3.0 * h),
        None => spectrum.values().to_vec(),
    }
}

/// Indices of prominent smoothed maxima, tallest first. The 5% floor drops
/// residual wiggles that survive smoothing in flat baseline stretches.
fn seed_maxima(smooth: &[f64]) -> Vec<usize> {
    let lo = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = lo + 0.05 * (hi - lo);
    let mut idx = crate::model::local_maxima_indices(smooth);
    idx.retain(|&i| smooth[i] >= floor);
    idx.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]));
    idx
}

/// Closed-form `(E_g, Ry)` from the apexes of the two lowest-energy
/// prominent maxima, read as levels `n_start` and `n_start + 1` of
/// `E_n = E_g - Ry/n²`. `None` when the data offers no credible pair.
fn two_level_seed(
    spectrum: &EnergyGrid,
    smooth: &[f64],
    k: usize,
    n_start: u32,
) -> Option<(f64, f64, Vec<f64>)> {
    let (emin, emax) = spectrum.span();
    let span = emax - emin;
    let mut idx = seed_maxima(smooth);
    if idx.len() < 2 {
        return None;
    }
    idx.sort_unstable();
    let (ea, eb) = (spectrum.energies()[idx[0]], spectrum.energies()[idx[1]]);
    let (a, b) = ((n_start as f64).powi(2), ((n_start + 1) as f64).powi(2));
    let ry = (eb - ea) / (1.0 / a - 1.0 / b);
    let gap = ea + ry / a;
    // Keep the seed only inside the bounds the parameter space will impose.
    if !ry.is_finite() || !gap.is_finite() || ry < 0.05 * span || ry > 10.0 * span {
        return None;
    }
    if gap < emin || gap > emax + 2.0 * span {
        return None;
    }
    let centers = (0..k)
        .map(|j| {
            let n = (n_start + j as u32) as f64;
            (gap - ry / (n * n)).clamp(emin, emax)
        })
        .collect();
    Some((gap, ry, centers))
}

/// Series parameter seeds `(E_g, Ry)` plus the centers they imply. The two
/// lowest-energy resolved resonances pin both values in closed form; when
/// the data offers no such pair, a coarse grid scan over `(E_g, Ry)` keeps
/// whichever candidate lands its levels on the highest spectrum values.
fn series_seed(
    spectrum: &EnergyGrid,
    smooth: &[f64],
    k: usize,
    n_start: u32,
) -> (f64, f64, Vec<f64>) {
    if let Some(seed) = two_level_seed(spectrum, smooth, k, n_start) {
        return seed;
    }
    let (emin, emax) = spectrum.span();
    let span = emax - emin;
    let mut best = (emax + 0.1 * span, 2.0 * span, Vec::new(), f64::NEG_INFINITY);
    for gi in 0..61 {
        let gap = emax - 0.5 * span + (1.5 * span) * gi as f64 / 60.0;
        for ri in 0..81 {
            let ry = 0.25 * span + (8.0 * span) * ri as f64 / 80.0;
            let mut centers = Vec::with_capacity(k);
            let mut ok = true;
            for j in 0..k {
                let n = (n_start + j as u32) as f64;
                let c = gap - ry / (n * n);
                if c < emin || c > emax {
                    ok = false;
                    break;
                }
                centers.push(c);
            }
            if !ok {
                continue;
            }
            let score: f64 = centers.iter().map(|&c| interp(spectrum, c)).sum();
            if score > best.3 {
                best = (gap, ry, centers, score);
            }
        }
    }
    if best.2.is_empty() {
        // No candidate kept all centers on the grid; spread them evenly.
        let centers: Vec<f64> =
            (0..k).map(|j| emin + span * (j as f64 + 1.0) / (k as f64 + 1.0)).collect();
        return (emax + 0.1 * span, 2.0 * span, centers);
    }
    (best.0, best.1, best.2)
}

/// Free-mode center seeds: the K tallest prominent maxima when there are
/// enough, otherwise the series-seed centers.
fn free_center_seed(
    spectrum: &EnergyGrid,
    smooth: &[f64],
    k: usize,
    seed: &(f64, f64, Vec<f64>),
) -> Vec<f64> {
    let ranked = seed_maxima(smooth);
    if ranked.len() >= k {
        let mut centers: Vec<f64> =
            ranked[..k].iter().map(|&i| spectrum.energies()[i]).collect();
        centers.sort_by(f64::total_cmp);
        // Strictly increasing centers are required downstream; collisions
        // fall back to the series seed.
        if centers.windows(2).all(|w| w[1] > w[0]) {
            return centers;
        }
    }
    seed.2.clone()
}

/// Width and amplitude seeds from the discrete curvature at the grid point
/// nearest `center`: Γ ≈ √(-8H/κ) for a Lorentzian of height H.
fn local_peak_seed(spectrum: &EnergyGrid, center: f64, baseline: f64, h: f64) -> (f64, f64) {
    let e = spectrum.energies();
    let v = spectrum.values();
    let i = nearest_index(e, center);
    let height = (v[i] - baseline).max(1e-12);
    let width = if i > 0 && i + 1 < v.len() {
        let curv = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        if curv < 0.0 {
            (-8.0 * height / curv).sqrt()
        } else {
            4.0 * h
        }
    } else {
        4.0 * h
    };
    // For a symmetric Fano/Lorentzian, height = C/(Γ/2) => C = H·Γ/2.
    (width, height * width * 0.5)
}

fn nearest_index(energies: &[f64], target: f64) -> usize {
    let mut i = energies.partition_point(|&x| x < target);
    if i >= energies.len() {
        i = energies.len() - 1;
    }
    if i > 0 && (target - energies[i - 1]).abs() <= (energies[i] - target).abs() {
        i -= 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::model::composite_spectrum;
    use approx::assert_relative_eq;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn param_names_and_counts_free_mode() {
        let layout = PeakLayout::free(2);
        assert_eq!(layout.param_count(), 11);
        let names = layout.param_names();
        assert_eq!(names[0], "center_1");
        assert_eq!(names[4], "center_2");
        assert_eq!(names[8], "urbach_amp");
        assert_eq!(names[10], "bandgap");
        assert_eq!(names.len(), 11);

        let with_sigma = PeakLayout::free(2).with_fitted_sigma();
        assert_eq!(with_sigma.param_count(), 12);
        assert_eq!(with_sigma.sigma_index(), Some(11));
    }

    #[test]
    fn param_names_and_counts_tied_mode() {
        let layout = PeakLayout::tied_range(2, 3).unwrap();
        assert_eq!(layout.param_count(), 2 + 3 + 9 + 2);
        let names = layout.param_names();
        assert_eq!(names[0], "bandgap");
        assert_eq!(names[1], "rydberg");
        assert_eq!(names[2], "defect_2");
        assert_eq!(names[5], "width_2");
        assert_eq!(names[8], "width_3");
        assert_eq!(*names.last().unwrap(), "urbach_width");
    }

    #[test]
    fn tied_layout_rejects_bad_levels() {
        assert!(PeakLayout::tied(vec![1, 2]).is_err());
        assert!(PeakLayout::tied(vec![3, 3]).is_err());
        assert!(PeakLayout::tied(vec![]).is_err());
    }

    #[test]
    fn free_eval_matches_peak_model_composition() {
        let layout = PeakLayout::free(1);
        // center, width, amp, q, urbach_amp, urbach_width, bandgap
        let theta = [2.15, 0.002, 0.01, 3.0, 0.2864, 0.008, 2.173];
        let energies = linspace(2.14, 2.17, 301);
        let curve = layout.eval(&theta, &energies).unwrap();

        let model = crate::model::PeakModel::new(
            vec![FanoPeakParams::new(2.15, 0.002, 0.01, 3.0).unwrap()],
            UrbachParams::new(0.2864, 0.008, 2.173).unwrap(),
            0.0,
        )
        .unwrap();
        let expect = composite_spectrum(&model, &energies).unwrap();
        for (a, b) in curve.iter().zip(expect.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn tied_eval_reproduces_the_reference_model() {
        let layout = PeakLayout::tied_range(2, 10).unwrap();
        let model = demo::bulk_model();
        let mut theta = vec![demo::BANDGAP_EV, demo::RYDBERG_EV];
        theta.extend_from_slice(&demo::DEFECTS);
        for (i, peak) in model.peaks().iter().enumerate() {
            let _ = i;
            theta.push(peak.width);
            theta.push(peak.amplitude);
            theta.push(peak.q);
        }
        theta.push(demo::URBACH_AMPLITUDE);
        theta.push(demo::URBACH_WIDTH_EV);

        let energies = linspace(2.14, 2.1729, 1201);
        let curve = layout.eval(&theta, &energies).unwrap();
        let expect = composite_spectrum(&model, &energies).unwrap();
        for (a, b) in curve.iter().zip(expect.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn component_curves_sum_to_the_full_curve() {
        let layout = PeakLayout::free(2).with_fixed_sigma(2e-4);
        let theta = [2.15, 0.002, 0.01, 3.0, 2.16, 0.001, 0.005, -1.0, 0.2, 0.008, 2.173];
        let energies = linspace(2.14, 2.17, 601);
        let full = layout.eval(&theta, &energies).unwrap();
        let mut sum = vec![0.0; energies.len()];
        let mut buf = Vec::new();
        for c in 0..layout.component_count() {
            layout.component_curve(&theta, &energies, c, &mut buf).unwrap();
            for (s, b) in sum.iter_mut().zip(&buf) {
                *s += b;
            }
        }
        for (a, b) in full.iter().zip(&sum) {
            assert_relative_eq!(a, b, max_relative = 1e-11, epsilon = 1e-14);
        }
    }

    #[test]
    fn impact_classification() {
        let free = PeakLayout::free(2);
        assert_eq!(free.impact_of(0), ParamImpact::Component(0));
        assert_eq!(free.impact_of(7), ParamImpact::Component(1));
        assert_eq!(free.impact_of(10), ParamImpact::Component(2)); // bandgap -> tail

        let tied = PeakLayout::tied_range(2, 3).unwrap().with_fitted_sigma();
        assert_eq!(tied.impact_of(0), ParamImpact::Global);
        assert_eq!(tied.impact_of(1), ParamImpact::Global);
        assert_eq!(tied.impact_of(2), ParamImpact::Component(0));
        assert_eq!(tied.impact_of(4), ParamImpact::Component(2));
        assert_eq!(tied.impact_of(5), ParamImpact::Component(0));
        assert_eq!(tied.impact_of(13), ParamImpact::Component(2));
        assert_eq!(tied.impact_of(14), ParamImpact::Component(3)); // urbach_amp
        assert_eq!(tied.impact_of(tied.sigma_index().unwrap()), ParamImpact::Global);
    }

    #[test]
    fn canonicalize_sorts_free_peaks_by_center() {
        let layout = PeakLayout::free(2).without_background();
        let theta = [2.16, 0.001, 0.5, 1.0, 2.15, 0.002, 0.3, -2.0];
        let canon = layout.canonicalize(&theta).unwrap();
        assert_eq!(canon, vec![2.15, 0.002, 0.3, -2.0, 2.16, 0.001, 0.5, 1.0]);
    }

    #[test]
    fn wrong_length_is_reported() {
        let layout = PeakLayout::free(1);
        let err = layout.eval(&[1.0, 2.0], &[2.0, 2.1]).unwrap_err();
        assert!(matches!(err, ModelError::WrongParameterCount { expected: 7, got: 2 }));
    }

    #[test]
    fn default_space_seeds_land_near_clean_synthetic_peaks() {
        // Two well-separated symmetric peaks, no tail, no noise.
        let energies = linspace(2.10, 2.20, 2001);
        let truth_layout = PeakLayout::free(2).without_background();
        let truth = [2.13, 0.004, 0.02, 0.0, 2.17, 0.004, 0.015, 0.0];
        let curve = truth_layout.eval(&truth, &energies).unwrap();
        let spectrum = EnergyGrid::new(energies, curve).unwrap();

        let space = truth_layout.default_space(&spectrum).unwrap();
        let inits = space.init_values();
        assert!((inits[0] - 2.13).abs() < 2e-3, "first center seed {}", inits[0]);
        assert!((inits[4] - 2.17).abs() < 2e-3, "second center seed {}", inits[4]);
        // Width seeds should be the right order of magnitude.
        assert!(inits[1] > 5e-4 && inits[1] < 4e-2);
        for (spec, &v) in space.specs().iter().zip(&inits) {
            assert!(v >= spec.lower && v <= spec.upper);
        }
    }

    #[test]
    fn default_space_tied_brackets_the_reference_series() {
        let model = demo::bulk_model();
        let energies = linspace(2.14, 2.1729, 4001);
        let grid = composite_spectrum(&model, &energies).unwrap();
        let layout = PeakLayout::tied_range(2, 6).unwrap();
        let space = layout.default_space(&grid).unwrap();
        let gap = space.init_values()[space.index_of("bandgap").unwrap()];
        let ry = space.init_values()[space.index_of("rydberg").unwrap()];
        assert!((gap - 2.173).abs() < 0.01, "gap seed {gap}");
        assert!((ry - 0.0949).abs() < 0.04, "rydberg seed {ry}");
    }
}
