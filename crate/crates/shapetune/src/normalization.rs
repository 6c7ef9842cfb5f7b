//! The normalization constant `nc(theta) = int exp(-rho(r; theta)) dr`, its
//! log, gradient and Hessian.
//!
//! Closed forms are implemented for the quantile, quantile-Huber and scaled
//! Huber families. Everything else integrates `exp(-rho)` piece by piece:
//! adaptive Gauss-Kronrod panels on bounded pieces, exact moment integrals on
//! the exponential/Gaussian tails beyond the outermost breakpoints (no
//! truncation there), and a scanned cutoff for smooth non-PLQ entries whose
//! tails only become linear asymptotically.
//!
//! Derivatives in theta interchange differentiation and integration: the
//! gradient integrand is `-exp(-rho) grad_theta rho`, the Hessian integrand
//! `exp(-rho)(grad rho grad rho' - hess rho)`, split at breakpoints. Tail
//! contributions to the derivatives use a window wide enough that the
//! truncated mass is below 1e-19 of the tail.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::penalty::{Penalty, PieceForm};
use crate::quadrature::adaptive_gk;
use crate::special::{exp_poly_moment, std_normal_cdf, SQRT_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcMode {
    /// Closed form when available, quadrature otherwise.
    Auto,
    /// Closed form only; errors for entries without one.
    ClosedForm,
    /// Always integrate numerically (used to cross-check the closed forms).
    Quadrature,
}

/// Evaluator for `log nc(theta)` and its derivatives.
#[derive(Clone, Debug)]
pub struct NormalizationModel {
    pub penalty: Penalty,
    pub mode: NcMode,
    pub tol: f64,
    pub max_panels: usize,
}

impl NormalizationModel {
    pub fn new(penalty: Penalty, mode: NcMode) -> Result<Self> {
        if mode == NcMode::ClosedForm && !has_closed_form(penalty) {
            return Err(Error::NoClosedForm { penalty: penalty.key() });
        }
        Ok(NormalizationModel { penalty, mode, tol: 1e-10, max_panels: 10_000 })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn use_closed(&self) -> bool {
        match self.mode {
            NcMode::Auto => has_closed_form(self.penalty),
            NcMode::ClosedForm => true,
            NcMode::Quadrature => false,
        }
    }

    /// Relative accuracy of the gradient/Hessian this model can deliver:
    /// machine precision for closed forms, the quadrature tolerance
    /// otherwise. Newton-type callers fold this into their stopping tests.
    pub fn derivative_noise(&self) -> f64 {
        if self.use_closed() {
            1e-15
        } else {
            self.tol
        }
    }

    /// nc(theta) with an error estimate (0 for closed forms).
    pub fn nc(&self, theta: &[f64]) -> Result<(f64, f64)> {
        self.penalty.validate_theta(theta)?;
        if self.use_closed() {
            Ok((closed_nc(self.penalty, theta)?, 0.0))
        } else {
            quadrature_nc(self.penalty, theta, self.tol, self.max_panels)
        }
    }

    pub fn log_nc(&self, theta: &[f64]) -> Result<f64> {
        let (v, _) = self.nc(theta)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Divergent {
                detail: format!("nc({:?}) = {v} for {}", theta, self.penalty.key()),
            });
        }
        Ok(v.ln())
    }

    pub fn grad_log_nc(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.penalty.validate_theta(theta)?;
        if self.use_closed() {
            return closed_grad_log(self.penalty, theta);
        }
        let (nc, _) = quadrature_nc(self.penalty, theta, self.tol, self.max_panels)?;
        let g = quadrature_grad_nc(self.penalty, theta, self.tol, self.max_panels, nc)?;
        Ok(g / nc)
    }

    pub fn hess_log_nc(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.penalty.validate_theta(theta)?;
        if self.use_closed() {
            return closed_hess_log(self.penalty, theta);
        }
        let (nc, _) = quadrature_nc(self.penalty, theta, self.tol, self.max_panels)?;
        let g = quadrature_grad_nc(self.penalty, theta, self.tol, self.max_panels, nc)?;
        let h = quadrature_hess_nc(self.penalty, theta, self.tol, self.max_panels, nc)?;
        let gl = &g / nc;
        Ok(h / nc - &gl * gl.transpose())
    }
}

pub fn has_closed_form(penalty: Penalty) -> bool {
    matches!(penalty, Penalty::Quantile | Penalty::QuantileHuber | Penalty::HuberScaled)
}

fn closed_nc(penalty: Penalty, theta: &[f64]) -> Result<f64> {
    match penalty {
        Penalty::Quantile => {
            let tau = theta[0];
            Ok(1.0 / tau + 1.0 / (1.0 - tau))
        }
        Penalty::QuantileHuber => {
            let (t1, t2) = (theta[0], theta[1]);
            Ok(gaussian_side(t1) + gaussian_side(t2) + SQRT_2PI * (std_normal_cdf(t2) - std_normal_cdf(-t1)))
        }
        Penalty::HuberScaled => {
            let (k, s) = (theta[0], theta[1]);
            Ok(s * (2.0 * gaussian_side(k) + SQRT_2PI * (2.0 * std_normal_cdf(k) - 1.0)))
        }
        _ => Err(Error::NoClosedForm { penalty: penalty.key() }),
    }
}

/// exp(-t^2/2)/t: one exponential tail of a Huber-type penalty.
#[inline]
fn gaussian_side(t: f64) -> f64 {
    (-0.5 * t * t).exp() / t
}

/// d/dt [exp(-t^2/2)/t] = -exp(-t^2/2) (1 + 1/t^2); the Phi term contributes
/// exp(-t^2/2) back, so d nc/d t = -exp(-t^2/2)/t^2 per side.
#[inline]
fn gaussian_side_d(t: f64) -> f64 {
    -(-0.5 * t * t).exp() / (t * t)
}

#[inline]
fn gaussian_side_dd(t: f64) -> f64 {
    (-0.5 * t * t).exp() * (1.0 / t + 2.0 / (t * t * t))
}

fn closed_grad_log(penalty: Penalty, theta: &[f64]) -> Result<DVector<f64>> {
    match penalty {
        Penalty::Quantile => {
            let tau = theta[0];
            Ok(DVector::from_vec(vec![-1.0 / tau + 1.0 / (1.0 - tau)]))
        }
        Penalty::QuantileHuber => {
            let (t1, t2) = (theta[0], theta[1]);
            let n = closed_nc(penalty, theta)?;
            Ok(DVector::from_vec(vec![gaussian_side_d(t1) / n, gaussian_side_d(t2) / n]))
        }
        Penalty::HuberScaled => {
            let (k, s) = (theta[0], theta[1]);
            let nh = 2.0 * gaussian_side(k) + SQRT_2PI * (2.0 * std_normal_cdf(k) - 1.0);
            Ok(DVector::from_vec(vec![2.0 * gaussian_side_d(k) / nh, 1.0 / s]))
        }
        _ => Err(Error::NoClosedForm { penalty: penalty.key() }),
    }
}

fn closed_hess_log(penalty: Penalty, theta: &[f64]) -> Result<DMatrix<f64>> {
    match penalty {
        Penalty::Quantile => {
            let tau = theta[0];
            let t2 = 1.0 - tau;
            Ok(DMatrix::from_row_slice(1, 1, &[1.0 / (tau * tau) + 1.0 / (t2 * t2)]))
        }
        Penalty::QuantileHuber => {
            let (t1, t2) = (theta[0], theta[1]);
            let n = closed_nc(penalty, theta)?;
            let g1 = gaussian_side_d(t1) / n;
            let g2 = gaussian_side_d(t2) / n;
            let h11 = gaussian_side_dd(t1) / n - g1 * g1;
            let h22 = gaussian_side_dd(t2) / n - g2 * g2;
            let h12 = -g1 * g2;
            Ok(DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22]))
        }
        Penalty::HuberScaled => {
            let (k, s) = (theta[0], theta[1]);
            let nh = 2.0 * gaussian_side(k) + SQRT_2PI * (2.0 * std_normal_cdf(k) - 1.0);
            let gk = 2.0 * gaussian_side_d(k) / nh;
            let hkk = 2.0 * gaussian_side_dd(k) / nh - gk * gk;
            Ok(DMatrix::from_row_slice(2, 2, &[hkk, 0.0, 0.0, -1.0 / (s * s)]))
        }
        _ => Err(Error::NoClosedForm { penalty: penalty.key() }),
    }
}

/// Width of the numeric window used for tail contributions to derivative
/// integrands: run until rho has grown by this much past the breakpoint.
const TAIL_RHO_GROWTH: f64 = 45.0;

/// Where a cutoff scan for non-PLQ tails gives up and declares divergence.
const CUTOFF_SCAN_LIMIT: f64 = 1e12;

/// Numerical realization of the normalization integral: split at
/// breakpoints, Gauss-Kronrod panels on the bounded core, exact moment
/// integrals on the tails. Returns (value, error estimate).
pub fn quadrature_nc(penalty: Penalty, theta: &[f64], tol: f64, max_panels: usize) -> Result<(f64, f64)> {
    penalty.validate_theta(theta)?;
    let pieces = penalty.density_pieces(theta);
    let mut total = 0.0;
    let mut err = 0.0;
    for piece in &pieces {
        let unbounded = !piece.lo.is_finite() || !piece.hi.is_finite();
        match piece.form {
            PieceForm::Quad { a2, a1, a0 } => {
                if unbounded {
                    let v = exp_poly_moment(0, a2, a1, a0, piece.lo, piece.hi);
                    if !v.is_finite() {
                        return Err(divergence_error(penalty, theta, piece.lo.is_finite()));
                    }
                    total += v;
                    err += v.abs() * 1e-15;
                } else {
                    let f = |r: f64| (-(a2 * r * r + a1 * r + a0)).exp();
                    let q = adaptive_gk(&f, piece.lo, piece.hi, 0.0, tol, max_panels)?;
                    total += q.value;
                    err += q.error;
                }
            }
            PieceForm::General => {
                if unbounded {
                    if !piece.lo.is_finite() && !piece.hi.is_finite() {
                        let (vl, el) = general_unbounded_value(penalty, theta, f64::NEG_INFINITY, 0.0, tol, max_panels)?;
                        let (vr, er) = general_unbounded_value(penalty, theta, 0.0, f64::INFINITY, tol, max_panels)?;
                        total += vl + vr;
                        err += el + er;
                    } else {
                        let (v, e) = general_unbounded_value(penalty, theta, piece.lo, piece.hi, tol, max_panels)?;
                        total += v;
                        err += e;
                    }
                } else {
                    let f = |r: f64| (-penalty.eval_raw(r, theta)).exp();
                    let q = adaptive_gk(&f, piece.lo, piece.hi, 0.0, tol, max_panels)?;
                    total += q.value;
                    err += q.error;
                }
            }
        }
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Divergent { detail: format!("nc({:?}) = {total} for {}", theta, penalty.key()) });
    }
    Ok((total, err))
}

fn divergence_error(penalty: Penalty, theta: &[f64], left_finite: bool) -> Error {
    let side = if left_finite { "right" } else { "left" };
    let named: Vec<String> = penalty
        .theta_names()
        .iter()
        .zip(theta.iter())
        .map(|(n, v)| format!("{n}={v}"))
        .collect();
    Error::Divergent {
        detail: format!(
            "{} tail of {} does not decay at {}",
            side,
            penalty.key(),
            named.join(", ")
        ),
    }
}

/// Integrate exp(-rho) on an unbounded piece with no closed form: scan a
/// cutoff R where rho has grown by TAIL_RHO_GROWTH with positive slope, do
/// panels up to R, and bound the remainder by the linearized tail.
fn general_unbounded_value(
    penalty: Penalty,
    theta: &[f64],
    lo: f64,
    hi: f64,
    tol: f64,
    max_panels: usize,
) -> Result<(f64, f64)> {
    let right = hi.is_infinite();
    let start = if right { lo.max(0.0) } else { hi.min(0.0) };
    let rho0 = penalty.eval_raw(start, theta);
    let mut w = 1.0;
    let cutoff = loop {
        let r = if right { start + w } else { start - w };
        if penalty.eval_raw(r, theta) - rho0 >= TAIL_RHO_GROWTH {
            break r;
        }
        w *= 2.0;
        if w > CUTOFF_SCAN_LIMIT {
            // The failing tail is the side being scanned.
            return Err(divergence_error(penalty, theta, right));
        }
    };
    let (a, b) = if right { (start, cutoff) } else { (cutoff, start) };
    let f = |r: f64| (-penalty.eval_raw(r, theta)).exp();
    let q = adaptive_gk(&f, a, b, 0.0, tol, max_panels)?;
    // Convex tail beyond the cutoff: mass <= exp(-rho(R)) / |rho'(R)|.
    let slope = penalty.dr_raw(cutoff, theta).abs().max(1e-300);
    let tail_bound = (-penalty.eval_raw(cutoff, theta)).exp() / slope;
    Ok((q.value + tail_bound, q.error + tail_bound))
}

/// Tail windows for derivative integrands: [T, T + width] such that the mass
/// beyond the window is below e^-45 of the tail.
fn tail_window(penalty: Penalty, theta: &[f64], from: f64, right: bool) -> (f64, f64) {
    let rho0 = penalty.eval_raw(from, theta);
    let mut w = 1.0;
    loop {
        let r = if right { from + w } else { from - w };
        if penalty.eval_raw(r, theta) - rho0 >= TAIL_RHO_GROWTH || w > CUTOFF_SCAN_LIMIT {
            return if right { (from, from + w) } else { (from - w, from) };
        }
        w *= 2.0;
    }
}

fn quadrature_vector_integral(
    penalty: Penalty,
    theta: &[f64],
    dim: usize,
    integrand: &dyn Fn(f64, usize) -> f64,
    tol_abs: f64,
    tol_rel: f64,
    max_panels: usize,
) -> Result<DVector<f64>> {
    let pieces = penalty.density_pieces(theta);
    let mut out = DVector::zeros(dim);
    for piece in &pieces {
        let (lo, hi) = if piece.lo.is_finite() && piece.hi.is_finite() {
            (piece.lo, piece.hi)
        } else if piece.lo.is_finite() {
            tail_window(penalty, theta, piece.lo, true)
        } else if piece.hi.is_finite() {
            tail_window(penalty, theta, piece.hi, false)
        } else {
            // Whole-line General piece (hybrid): window both ways from 0.
            let (l, _) = tail_window(penalty, theta, 0.0, false);
            let (_, h) = tail_window(penalty, theta, 0.0, true);
            (l, h)
        };
        for c in 0..dim {
            let f = |r: f64| integrand(r, c);
            let q = adaptive_gk(&f, lo, hi, tol_abs, tol_rel, max_panels)?;
            out[c] += q.value;
        }
    }
    Ok(out)
}

/// grad nc by Leibniz interchange: integral of -exp(-rho) grad_theta rho.
fn quadrature_grad_nc(
    penalty: Penalty,
    theta: &[f64],
    tol: f64,
    max_panels: usize,
    nc_scale: f64,
) -> Result<DVector<f64>> {
    let k = penalty.theta_dim();
    let integrand = move |r: f64, c: usize| {
        let mut g = vec![0.0; k];
        penalty.dtheta_into(r, theta, &mut g);
        -(-penalty.eval_raw(r, theta)).exp() * g[c]
    };
    quadrature_vector_integral(penalty, theta, k, &integrand, tol * nc_scale, tol, max_panels)
}

/// hess nc: integral of exp(-rho) (grad rho grad rho' - hess rho), packed
/// row-major symmetric.
fn quadrature_hess_nc(
    penalty: Penalty,
    theta: &[f64],
    tol: f64,
    max_panels: usize,
    nc_scale: f64,
) -> Result<DMatrix<f64>> {
    let k = penalty.theta_dim();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let integrand = |r: f64, c: usize| {
        let (i, j) = pairs[c];
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        penalty.dtheta_into(r, theta, &mut g);
        penalty.d2theta_into(r, theta, &mut h);
        (-penalty.eval_raw(r, theta)).exp() * (g[i] * g[j] - h[i * k + j])
    };
    let vals = quadrature_vector_integral(penalty, theta, pairs.len(), &integrand, tol * nc_scale, tol, max_panels)?;
    let mut out = DMatrix::zeros(k, k);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        out[(i, j)] = vals[c];
        out[(j, i)] = vals[c];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_log_nc_closed_form_values() {
        let m = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
        let v = m.log_nc(&[0.5]).unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-14, "{v}");
        let v = m.log_nc(&[0.9]).unwrap();
        assert!((v - (1.0 / 0.9f64 + 10.0).ln()).abs() < 1e-14, "{v}");
    }

    #[test]
    fn quantile_grad_matches_analytic_derivative() {
        let m = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
        assert!(m.grad_log_nc(&[0.5]).unwrap()[0].abs() < 1e-14);
        let g = m.grad_log_nc(&[0.3]).unwrap()[0];
        // (-1/tau^2 + 1/(1-tau)^2) / (1/tau + 1/(1-tau)) at tau = 0.3
        let expect = (-1.0 / 0.09 + 1.0 / 0.49) / (1.0 / 0.3 + 1.0 / 0.7);
        assert!((g - expect).abs() < 1e-12, "{g} vs {expect}");
        assert!((g + 1.9047619047619047).abs() < 1e-12);
        // Confirm by central difference.
        let h = 1e-7;
        let fd = (m.log_nc(&[0.3 + h]).unwrap() - m.log_nc(&[0.3 - h]).unwrap()) / (2.0 * h);
        assert!((g - fd).abs() < 1e-6);
    }

    #[test]
    fn quantile_huber_gradient_symmetric_at_equal_thetas() {
        let m = NormalizationModel::new(Penalty::QuantileHuber, NcMode::ClosedForm).unwrap();
        let g = m.grad_log_nc(&[1.0, 1.0]).unwrap();
        assert!((g[0] - g[1]).abs() < 1e-14);
    }

    #[test]
    fn quadrature_matches_gaussian_and_quantile() {
        let (v, e) = quadrature_nc(Penalty::L2, &[], 1e-12, 10_000).unwrap();
        assert!((v - SQRT_2PI).abs() < 1e-10, "{v} err {e}");
        let (v, _) = quadrature_nc(Penalty::Quantile, &[0.5], 1e-12, 10_000).unwrap();
        assert!((v - 4.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        for (p, theta) in [
            (Penalty::Quantile, vec![0.27]),
            (Penalty::QuantileHuber, vec![1.0, 1.0]),
            (Penalty::QuantileHuber, vec![0.4, 1.9]),
            (Penalty::HuberScaled, vec![1.3, 0.6]),
        ] {
            let closed = closed_nc(p, &theta).unwrap();
            let (quad, _) = quadrature_nc(p, &theta, 1e-12, 10_000).unwrap();
            assert!(
                (closed - quad).abs() <= 1e-8 * closed,
                "{}: closed {closed} vs quad {quad}",
                p.key()
            );
        }
    }

    #[test]
    fn closed_form_derivatives_match_quadrature_path() {
        for (p, theta) in [
            (Penalty::QuantileHuber, vec![0.8, 1.4]),
            (Penalty::HuberScaled, vec![1.1, 0.9]),
        ] {
            let cm = NormalizationModel::new(p, NcMode::ClosedForm).unwrap();
            let qm = NormalizationModel::new(p, NcMode::Quadrature).unwrap();
            let (gc, gq) = (cm.grad_log_nc(&theta).unwrap(), qm.grad_log_nc(&theta).unwrap());
            assert!((&gc - &gq).amax() < 1e-7, "{}: {gc} vs {gq}", p.key());
            let (hc, hq) = (cm.hess_log_nc(&theta).unwrap(), qm.hess_log_nc(&theta).unwrap());
            assert!((&hc - &hq).amax() < 1e-6, "{}: {hc} vs {hq}", p.key());
        }
    }

    #[test]
    fn hinge_and_logistic_diverge_with_named_tail() {
        let e = quadrature_nc(Penalty::Hinge, &[1.0], 1e-10, 10_000).unwrap_err();
        assert!(format!("{e}").contains("left tail"), "{e}");
        let e = quadrature_nc(Penalty::Logistic, &[2.0], 1e-10, 10_000).unwrap_err();
        assert!(format!("{e}").contains("tail"), "{e}");
    }

    #[test]
    fn boundary_theta_is_rejected_with_parameter_name() {
        let m = NormalizationModel::new(Penalty::Quantile, NcMode::Auto).unwrap();
        let e = m.log_nc(&[0.0]).unwrap_err();
        assert!(matches!(e, Error::DomainViolation { .. }), "{e}");
    }

    #[test]
    fn barrier_behavior_toward_tau_zero() {
        let m = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
        let v1 = m.log_nc(&[0.1]).unwrap();
        let v2 = m.log_nc(&[0.01]).unwrap();
        let v3 = m.log_nc(&[0.001]).unwrap();
        assert!(v3 > v2 && v2 > v1);
    }

    #[test]
    fn quantile_log_nc_is_convex_on_grid() {
        let m = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
        let mut taus = vec![];
        let mut t = 0.05;
        while t <= 0.951 {
            taus.push(t);
            t += 0.01;
        }
        for w in taus.windows(3) {
            let (a, b, c) = (
                m.log_nc(&[w[0]]).unwrap(),
                m.log_nc(&[w[1]]).unwrap(),
                m.log_nc(&[w[2]]).unwrap(),
            );
            assert!(a - 2.0 * b + c >= -1e-10, "second difference at tau={}", w[1]);
        }
    }

    #[test]
    fn huberized_t_quadrature_matches_frozen_oracle() {
        // Frozen from a composite-Simpson oracle (1e6 points on the core,
        // exact exponential tails); equals 2*sigma*atan(kappa) + sigma/kappa.
        let expect = 0.301_788_266_449_626_74;
        let (v, e) = quadrature_nc(Penalty::HuberizedT, &[8.0, 0.1], 1e-12, 10_000).unwrap();
        assert!((v - expect).abs() < 1e-9, "{v} err {e}");
    }

    #[test]
    fn hybrid_value_matches_frozen_simpson_oracle() {
        // Frozen from the same Simpson oracle; equals 2 e eps K1(1).
        let expect = 3.272_306_972_524_776;
        let (v, _) = quadrature_nc(Penalty::Hybrid, &[1.0], 1e-11, 10_000).unwrap();
        assert!((v - expect).abs() < 1e-6 * expect, "{v}");
    }

    #[test]
    fn interchange_gradient_matches_finite_differences() {
        let mut rng = crate::rng::CounterRng::new(77, 4);
        for p in [Penalty::Huber, Penalty::Vapnik, Penalty::ElasticNet, Penalty::HuberizedT] {
            for _ in 0..10 {
                let theta: Vec<f64> = (0..p.theta_dim()).map(|_| 0.4 + 1.6 * rng.uniform()).collect();
                let m = NormalizationModel::new(p, NcMode::Quadrature).unwrap();
                let g = m.grad_log_nc(&theta).unwrap();
                let h = 1e-5;
                for i in 0..theta.len() {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[i] += h;
                    tm[i] -= h;
                    let fd = (m.log_nc(&tp).unwrap() - m.log_nc(&tm).unwrap()) / (2.0 * h);
                    assert!(
                        (g[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "{} grad[{i}]={} fd={fd} at {theta:?}",
                        p.key(),
                        g[i]
                    );
                }
            }
        }
    }
}
