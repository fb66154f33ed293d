//! Bounded Levenberg–Marquardt minimization of mean-squared residuals.
//!
//! Box constraints are removed by smooth reparameterizations (the classic
//! minpack-style transforms): a sine map for two-sided bounds and shifted
//! square-root maps for one-sided ones. The damped normal equations then
//! run in the unconstrained internal space with Nielsen's gain-ratio update
//! for the damping parameter.
//!
//! The objective is the *mean* squared residual ε = Σr²/m, so tolerances
//! and reported values do not grow with the number of data points.

use nalgebra::{DMatrix, DVector};

use crate::params::ParamSpace;

use super::FitError;

/// Stopping rules for [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    /// Relative step threshold: ‖δu‖/(1+‖u‖) below this counts as converged
    /// (either this or the gradient criterion stops the solver).
    pub step_tolerance: f64,
    /// ∞-norm threshold on the gradient of ε in internal coordinates.
    pub gradient_tolerance: f64,
    /// Hard cap on solver iterations (accepted or rejected steps).
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { step_tolerance: 1e-10, gradient_tolerance: 1e-10, max_iterations: 10_000 }
    }
}

/// Raw solver outcome in external (bounded) coordinates.
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub values: Vec<f64>,
    /// Full covariance (pinned rows/columns are zero), `s²·(JᵀJ)⁺` with
    /// `s² = SSR/(m - p_free)`.
    pub covariance: DMatrix<f64>,
    pub residual_sse: f64,
    pub residual_mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub step_criterion_met: bool,
    pub gradient_criterion_met: bool,
    pub gradient_norm: f64,
    pub used_fd_jacobian: bool,
}

/// Residual callback: fills `out` (length fixed at call time) at external θ.
pub type ResidualFn<'a> = &'a mut dyn FnMut(&[f64], &mut [f64]) -> Result<(), FitError>;
/// Analytic Jacobian callback: full external m×P matrix at θ.
pub type JacobianFn<'a> = &'a mut dyn FnMut(&[f64]) -> Result<DMatrix<f64>, FitError>;

#[derive(Debug, Clone, Copy)]
enum Transform {
    Identity,
    LowerOnly(f64),
    UpperOnly(f64),
    Both { lo: f64, hi: f64 },
}

impl Transform {
    fn from_bounds(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => Transform::Identity,
            (true, false) => Transform::LowerOnly(lo),
            (false, true) => Transform::UpperOnly(hi),
            (true, true) => Transform::Both { lo, hi },
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::LowerOnly(lo) => lo + ((u * u + 1.0).sqrt() - 1.0),
            Transform::UpperOnly(hi) => hi - ((u * u + 1.0).sqrt() - 1.0),
            Transform::Both { lo, hi } => lo + (hi - lo) * (u.sin() + 1.0) * 0.5,
        }
    }

    fn to_internal(&self, p: f64) -> f64 {
        match *self {
            Transform::Identity => p,
            Transform::LowerOnly(lo) => {
                let s = (p - lo).max(0.0) + 1.0;
                (s * s - 1.0).sqrt()
            }
            Transform::UpperOnly(hi) => {
                let s = (hi - p).max(0.0) + 1.0;
                (s * s - 1.0).sqrt()
            }
            Transform::Both { lo, hi } => {
                let t = (2.0 * (p - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                t.asin()
            }
        }
    }

    /// dp/du, evaluated at internal u.
    fn slope(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::LowerOnly(_) => u / (u * u + 1.0).sqrt(),
            Transform::UpperOnly(_) => -u / (u * u + 1.0).sqrt(),
            Transform::Both { lo, hi } => (hi - lo) * 0.5 * u.cos(),
        }
    }
}

/// Central-difference external Jacobian (m×P; pinned columns stay zero).
/// Steps are `∛ε_machine · scale` with the scale tied to the parameter
/// magnitude or the bound width, and samples are clipped into the bounds.
pub fn fd_jacobian(
    space: &ParamSpace,
    point: &[f64],
    residual_count: usize,
    residuals: ResidualFn,
) -> Result<DMatrix<f64>, FitError> {
    let eps_cbrt = f64::EPSILON.cbrt();
    let p_count = space.len();
    let mut jac = DMatrix::zeros(residual_count, p_count);
    let mut plus = vec![0.0; residual_count];
    let mut minus = vec![0.0; residual_count];
    let mut probe = point.to_vec();
    for &j in &space.free_indices() {
        let spec = &space.specs()[j];
        let scale = if spec.lower.is_finite() && spec.upper.is_finite() {
            point[j].abs().max(1e-3 * (spec.upper - spec.lower))
        } else {
            point[j].abs().max(1e-3)
        };
        let h = eps_cbrt * scale;
        let a = (point[j] + h).min(spec.upper);
        let b = (point[j] - h).max(spec.lower);
        if !(a > b) {
            return Err(FitError::DegenerateDesign(format!(
                "cannot form a finite-difference step for parameter {:?}",
                spec.name
            )));
        }
        probe[j] = a;
        residuals(&probe, &mut plus)?;
        probe[j] = b;
        residuals(&probe, &mut minus)?;
        probe[j] = point[j];
        let inv = 1.0 / (a - b);
        for r in 0..residual_count {
            jac[(r, j)] = (plus[r] - minus[r]) * inv;
        }
    }
    Ok(jac)
}

/// Largest relative disagreement between two Jacobians, with `floor`
/// guarding the denominator. Handy for validating analytic derivatives.
pub fn max_jacobian_mismatch(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "jacobian shapes differ");
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let denom = x.abs().max(y.abs()).max(floor);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}

/// Minimizes the mean-squared residual over the free parameters of `space`.
///
/// `jacobian`, when given, must produce the full external Jacobian; when
/// absent, central finite differences are used throughout.
pub fn minimize(
    space: &ParamSpace,
    residual_count: usize,
    residuals: ResidualFn,
    mut jacobian: Option<JacobianFn>,
    options: &LmOptions,
) -> Result<LmOutcome, FitError> {
    let m = residual_count;
    let p_count = space.len();
    let free = space.free_indices();
    let n_free = free.len();
    if m < n_free {
        return Err(FitError::Underdetermined { params: n_free, points: m });
    }

    let mut point = space.init_values();
    let mut r = vec![0.0; m];
    residuals(&point, &mut r)?;
    ensure_finite(&r, 0)?;
    let mut sse = dot(&r, &r);

    if n_free == 0 {
        return Ok(LmOutcome {
            values: point,
            covariance: DMatrix::zeros(p_count, p_count),
            residual_sse: sse,
            residual_mse: sse / m as f64,
            iterations: 0,
            converged: true,
            step_criterion_met: true,
            gradient_criterion_met: true,
            gradient_norm: 0.0,
            used_fd_jacobian: false,
        });
    }

    let transforms: Vec<Transform> =
        free.iter().map(|&j| Transform::from_bounds(space.specs()[j].lower, space.specs()[j].upper)).collect();
    let mut u: Vec<f64> =
        free.iter().zip(&transforms).map(|(&j, t)| t.to_internal(point[j])).collect();
    // Round-trip the initials so the starting residuals match the
    // transformed coordinates exactly.
    apply_external(&mut point, &free, &transforms, &u);
    residuals(&point, &mut r)?;
    ensure_finite(&r, 0)?;
    sse = dot(&r, &r);

    let mut used_fd = jacobian.is_none();
    let mut jac_ext = eval_jacobian(space, &point, m, residuals, &mut jacobian)?;

    // Gauss-Newton hessian and gradient of ε = SSR/m in internal coordinates.
    let (mut hess, mut grad) = internal_system(&jac_ext, &r, &free, &transforms, &u, m);
    let mut mu = 1e-3 * hess.diagonal().amax().max(1e-300);
    let mut nu = 2.0;

    let mut iterations = 0usize;
    let mut converged = false;
    let mut step_met = false;
    let mut grad_met = grad.amax() < options.gradient_tolerance;

    let mut trial_point = point.clone();
    let mut trial_r = vec![0.0; m];

    while iterations < options.max_iterations {
        iterations += 1;
        let mut damped = hess.clone();
        for i in 0..n_free {
            damped[(i, i)] += mu;
        }
        let delta = match damped.cholesky() {
            Some(chol) => chol.solve(&(-&grad)),
            None => {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e120 {
                    break;
                }
                continue;
            }
        };
        let u_norm = norm(&u);
        let rel_step = delta.norm() / (1.0 + u_norm);

        let u_trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
        apply_external(&mut trial_point, &free, &transforms, &u_trial);
        let eval_ok = residuals(&trial_point, &mut trial_r).is_ok()
            && trial_r.iter().all(|v| v.is_finite());
        let sse_trial = if eval_ok { dot(&trial_r, &trial_r) } else { f64::INFINITY };

        // Predicted decrease of ε under the damped quadratic model.
        let predicted =
            0.5 * delta.iter().zip(grad.iter()).map(|(d, g)| d * (mu * d - g)).sum::<f64>();
        let actual = (sse - sse_trial) / m as f64;
        let gain = if predicted > 0.0 { actual / predicted } else { -1.0 };

        if gain > 0.0 && sse_trial.is_finite() {
            u = u_trial;
            point.copy_from_slice(&trial_point);
            r.copy_from_slice(&trial_r);
            sse = sse_trial;
            jac_ext = eval_jacobian(space, &point, m, residuals, &mut jacobian)?;
            used_fd |= jacobian.is_none();
            let (h2, g2) = internal_system(&jac_ext, &r, &free, &transforms, &u, m);
            hess = h2;
            grad = g2;
            mu *= (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            step_met = rel_step < options.step_tolerance;
            grad_met = grad.amax() < options.gradient_tolerance;
            // Either criterion signals a stationary stop; both flags stay
            // in the report so callers can see which one fired.
            if step_met || grad_met {
                converged = true;
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            // The solver can no longer move: a stalled step below tolerance
            // is convergence at the current point.
            if rel_step < options.step_tolerance {
                step_met = true;
                converged = true;
                break;
            }
            if mu > 1e120 {
                break;
            }
        }
    }

    let covariance = covariance_from(&jac_ext, &free, sse, m, n_free);
    Ok(LmOutcome {
        values: point,
        covariance,
        residual_sse: sse,
        residual_mse: sse / m as f64,
        iterations,
        converged,
        step_criterion_met: step_met,
        gradient_criterion_met: grad_met,
        gradient_norm: grad.amax(),
        used_fd_jacobian: used_fd,
    })
}

fn apply_external(point: &mut [f64], free: &[usize], transforms: &[Transform], u: &[f64]) {
    for ((&j, t), &ui) in free.iter().zip(transforms).zip(u) {
        point[j] = t.to_external(ui);
    }
}

fn eval_jacobian(
    space: &ParamSpace,
    point: &[f64],
    m: usize,
    residuals: ResidualFn,
    jacobian: &mut Option<JacobianFn>,
) -> Result<DMatrix<f64>, FitError> {
    match jacobian {
        Some(jac) => {
            let j = jac(point)?;
            if j.nrows() != m || j.ncols() != space.len() {
                return Err(FitError::DegenerateDesign(format!(
                    "jacobian shape {}x{} does not match {}x{}",
                    j.nrows(),
                    j.ncols(),
                    m,
                    space.len()
                )));
            }
            Ok(j)
        }
        None => fd_jacobian(space, point, m, residuals),
    }
}

/// Builds `H = (2/m)·JᵀJ` and `g = (2/m)·Jᵀr` in internal coordinates.
fn internal_system(
    jac_ext: &DMatrix<f64>,
    r: &[f64],
    free: &[usize],
    transforms: &[Transform],
    u: &[f64],
    m: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n_free = free.len();
    let mut jint = DMatrix::zeros(jac_ext.nrows(), n_free);
    for (c, (&j, t)) in free.iter().zip(transforms).enumerate() {
        let slope = t.slope(u[c]);
        for row in 0..jac_ext.nrows() {
            jint[(row, c)] = jac_ext[(row, j)] * slope;
        }
    }
    let scale = 2.0 / m as f64;
    let rv = DVector::from_column_slice(r);
    let hess = {
        let mut h = jint.transpose() * &jint;
        h *= scale;
        h
    };
    let grad = {
        let mut g = jint.transpose() * rv;
        g *= scale;
        g
    };
    (hess, grad)
}

/// `s²·(J_freeᵀ J_free)⁺` embedded into the full parameter square, with
/// `s² = SSR/(m − p_free)` (or SSR/m when the fit is saturated).
fn covariance_from(
    jac_ext: &DMatrix<f64>,
    free: &[usize],
    sse: f64,
    m: usize,
    n_free: usize,
) -> DMatrix<f64> {
    let p_count = jac_ext.ncols();
    let mut cov = DMatrix::zeros(p_count, p_count);
    if n_free == 0 {
        return cov;
    }
    let mut jfree = DMatrix::zeros(jac_ext.nrows(), n_free);
    for (c, &j) in free.iter().enumerate() {
        for row in 0..jac_ext.nrows() {
            jfree[(row, c)] = jac_ext[(row, j)];
        }
    }
    let jtj = jfree.transpose() * &jfree;
    let scale_norm = jtj.norm();
    let svd = jtj.svd(true, true);
    let pinv = match svd.pseudo_inverse(1e-12 * scale_norm.max(1e-300)) {
        Ok(p) => p,
        Err(_) => return cov,
    };
    let dof = if m > n_free { (m - n_free) as f64 } else { m as f64 };
    let s2 = sse / dof;
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            cov[(ja, jb)] = pinv[(a, b)] * s2;
        }
    }
    cov
}

fn ensure_finite(r: &[f64], iteration: usize) -> Result<(), FitError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteEvaluation(iteration));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSpec;
    use approx::assert_relative_eq;

    fn space2(a: ParamSpec, b: ParamSpec) -> ParamSpace {
        ParamSpace::new(vec![a, b]).unwrap()
    }

    #[test]
    fn transforms_round_trip_and_respect_bounds() {
        for t in [
            Transform::Identity,
            Transform::LowerOnly(-1.0),
            Transform::UpperOnly(3.0),
            Transform::Both { lo: 0.0, hi: 2.0 },
        ] {
            for p in [-0.5, 0.1, 1.0, 1.9] {
                let inside = match t {
                    Transform::LowerOnly(lo) => p > lo,
                    Transform::UpperOnly(hi) => p < hi,
                    Transform::Both { lo, hi } => p > lo && p < hi,
                    Transform::Identity => true,
                };
                if !inside {
                    continue;
                }
                let u = t.to_internal(p);
                assert_relative_eq!(t.to_external(u), p, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
        // The sine map never leaves the box, whatever u is.
        let t = Transform::Both { lo: 1.0, hi: 4.0 };
        for u in [-50.0, -1.0, 0.0, 2.0, 123.0] {
            let p = t.to_external(u);
            assert!((1.0..=4.0).contains(&p));
        }
    }

    #[test]
    fn quadratic_bowl_converges_to_the_minimum() {
        // r = [x - 3, y + 1]; minimum at (3, -1).
        let space = space2(ParamSpec::free("x", 0.0), ParamSpec::free("y", 0.0));
        let mut res = |p: &[f64], out: &mut [f64]| {
            out[0] = p[0] - 3.0;
            out[1] = p[1] + 1.0;
            Ok(())
        };
        let out = minimize(&space, 2, &mut res, None, &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.values[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(out.values[1], -1.0, epsilon = 1e-8);
        assert!(out.residual_mse < 1e-16);
    }

    #[test]
    fn bounds_are_never_violated_and_clip_the_optimum() {
        // Unconstrained optimum at x = 5 but the box stops at 2.
        let space = space2(ParamSpec::bounded("x", 1.0, 0.0, 2.0), ParamSpec::fixed("c", 0.0));
        let mut res = |p: &[f64], out: &mut [f64]| {
            out[0] = p[0] - 5.0;
            out[1] = 0.0;
            Ok(())
        };
        let out = minimize(&space, 2, &mut res, None, &LmOptions::default()).unwrap();
        assert!(out.values[0] <= 2.0);
        assert!(out.values[0] > 1.99, "should push against the bound, got {}", out.values[0]);
    }

    #[test]
    fn exponential_fit_with_analytic_jacobian_recovers_parameters() {
        // y = a·exp(b·t) at t = 0..10, truth a = 2, b = -0.3.
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let data: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let space = space2(
            ParamSpec::bounded("a", 1.0, 0.0, 10.0),
            ParamSpec::bounded("b", -0.1, -5.0, 0.0),
        );
        let ts2 = ts.clone();
        let data2 = data.clone();
        let mut res = move |p: &[f64], out: &mut [f64]| {
            for (i, t) in ts2.iter().enumerate() {
                out[i] = p[0] * (p[1] * t).exp() - data2[i];
            }
            Ok(())
        };
        let mut jac = move |p: &[f64]| {
            let mut j = DMatrix::zeros(ts.len(), 2);
            for (i, t) in ts.iter().enumerate() {
                let e = (p[1] * t).exp();
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * t * e;
            }
            Ok(j)
        };
        let out =
            minimize(&space, 40, &mut res, Some(&mut jac), &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!(!out.used_fd_jacobian);
        assert_relative_eq!(out.values[0], 2.0, epsilon = 1e-7);
        assert_relative_eq!(out.values[1], -0.3, epsilon = 1e-7);
        // Clean data: uncertainties collapse toward zero.
        assert!(out.covariance[(0, 0)].sqrt() < 1e-6);
    }

    #[test]
    fn perfect_fit_at_the_start_reports_convergence() {
        let space = space2(ParamSpec::bounded("a", 2.0, 0.0, 10.0), ParamSpec::fixed("b", 1.0));
        let mut res = |p: &[f64], out: &mut [f64]| {
            out[0] = p[0] - 2.0;
            out[1] = 2.0 * (p[0] - 2.0);
            Ok(())
        };
        let out = minimize(&space, 2, &mut res, None, &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.gradient_criterion_met);
        assert!(out.step_criterion_met);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        // Rosenbrock-style residuals are slow from a bad start; one
        // iteration cannot finish.
        let space = space2(ParamSpec::free("x", -1.2), ParamSpec::free("y", 1.0));
        let mut res = |p: &[f64], out: &mut [f64]| {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
            Ok(())
        };
        let opts = LmOptions { max_iterations: 1, ..Default::default() };
        let out = minimize(&space, 2, &mut res, None, &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn underdetermined_problems_are_rejected() {
        let space = space2(ParamSpec::free("x", 0.0), ParamSpec::free("y", 0.0));
        let mut res = |_: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            Ok(())
        };
        let err = minimize(&space, 1, &mut res, None, &LmOptions::default()).unwrap_err();
        assert!(matches!(err, FitError::Underdetermined { params: 2, points: 1 }));
    }

    #[test]
    fn all_pinned_space_evaluates_once_and_converges_trivially() {
        let space = space2(ParamSpec::fixed("a", 1.0), ParamSpec::fixed("b", 2.0));
        let mut res = |p: &[f64], out: &mut [f64]| {
            out[0] = p[0] + p[1];
            out[1] = p[0] - p[1];
            Ok(())
        };
        let out = minimize(&space, 2, &mut res, None, &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_relative_eq!(out.residual_sse, 9.0 + 1.0);
    }

    #[test]
    fn fd_jacobian_matches_analytic_on_a_smooth_model() {
        let space = space2(
            ParamSpec::bounded("a", 1.5, 0.0, 10.0),
            ParamSpec::bounded("b", -0.2, -5.0, 0.0),
        );
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let ts2 = ts.clone();
        let mut res = move |p: &[f64], out: &mut [f64]| {
            for (i, t) in ts2.iter().enumerate() {
                out[i] = p[0] * (p[1] * t).exp();
            }
            Ok(())
        };
        let point = space.init_values();
        let fd = fd_jacobian(&space, &point, 20, &mut res).unwrap();
        let mut analytic = DMatrix::zeros(20, 2);
        for (i, t) in ts.iter().enumerate() {
            let e = (point[1] * t).exp();
            analytic[(i, 0)] = e;
            analytic[(i, 1)] = point[0] * t * e;
        }
        assert!(max_jacobian_mismatch(&fd, &analytic, 1e-8) < 1e-6);
    }
}
