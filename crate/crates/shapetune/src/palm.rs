//! Proximal alternating linearized minimization for smooth penalties.
//!
//! Minimizes `H(x, theta) + r1(x) + r2(theta)` with
//! `H = sum_i rho(y_i - <a_i, x>; theta)`, `r1` a prox-friendly regularizer
//! and `r2 = delta_D(theta) + m log nc(theta)`. Both blocks take
//! prox-gradient steps; the nontrivial prox of `r2` is solved by damped
//! Newton with a log-barrier continuation on the domain constraints, using
//! the gradient and Hessian of `log nc`.
//!
//! Step sizes start from conservative Lipschitz bounds (`|A|_2^2` times the
//! penalty curvature for the x block, the spectral radius of the theta
//! Hessian of H for the theta block) and are validated by backtracking, so
//! the objective is nonincreasing on every accepted iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, spectral_norm_sq, sym_spectral_radius};
use crate::normalization::NormalizationModel;
use crate::penalty::{Penalty, ShapeDomain};

#[derive(Clone, Debug)]
pub enum Regularizer {
    None,
    L1(f64),
    Box { lo: DVector<f64>, hi: DVector<f64> },
}

impl Regularizer {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::None | Regularizer::Box { .. } => 0.0,
            Regularizer::L1(lam) => lam * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        match self {
            Regularizer::None => v.clone(),
            Regularizer::L1(lam) => {
                let t = lam * step;
                v.map(|z| z.signum() * (z.abs() - t).max(0.0))
            }
            Regularizer::Box { lo, hi } => {
                DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PalmProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalty: Penalty,
    pub domain: ShapeDomain,
    pub model: NormalizationModel,
    pub reg: Regularizer,
}

impl PalmProblem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, penalty: Penalty, model: NormalizationModel) -> Result<Self> {
        if !penalty.is_smooth() {
            return Err(Error::GradientUnavailable { penalty: penalty.key() });
        }
        Ok(PalmProblem { a, y, penalty, domain: penalty.shape_domain(), model, reg: Regularizer::None })
    }

    pub fn with_domain(mut self, domain: ShapeDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_regularizer(mut self, reg: Regularizer) -> Self {
        self.reg = reg;
        self
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.a * x
    }

    /// H(x, theta) = sum_i rho(y_i - <a_i, x>; theta)
    pub fn misfit(&self, x: &DVector<f64>, theta: &[f64]) -> f64 {
        self.residuals(x).iter().map(|&r| self.penalty.eval_raw(r, theta)).sum()
    }

    /// Full objective H + r1 + m log nc.
    pub fn objective(&self, x: &DVector<f64>, theta: &[f64]) -> Result<f64> {
        Ok(self.misfit(x, theta) + self.reg.value(x) + self.m() as f64 * self.model.log_nc(theta)?)
    }

    fn grad_x(&self, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        let r = self.residuals(x);
        let psi = DVector::from_fn(r.len(), |i, _| self.penalty.dr_raw(r[i], theta));
        -(self.a.transpose() * psi)
    }

    fn grad_theta(&self, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        let k = theta.len();
        let r = self.residuals(x);
        let mut acc = DVector::zeros(k);
        let mut buf = vec![0.0; k];
        for &ri in r.iter() {
            self.penalty.dtheta_into(ri, theta, &mut buf);
            for j in 0..k {
                acc[j] += buf[j];
            }
        }
        acc
    }

    fn hess_theta_misfit(&self, x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let k = theta.len();
        let r = self.residuals(x);
        let mut acc = DMatrix::zeros(k, k);
        let mut buf = vec![0.0; k * k];
        for &ri in r.iter() {
            self.penalty.d2theta_into(ri, theta, &mut buf);
            for a in 0..k {
                for b in 0..k {
                    acc[(a, b)] += buf[a * k + b];
                }
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PalmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Safety factor on the Lipschitz step bounds.
    pub gamma: f64,
}

impl Default for PalmOptions {
    fn default() -> Self {
        PalmOptions { tol: 1e-8, max_iter: 5000, max_backtracks: 50, gamma: 1.1 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PalmTraceRow {
    pub iter: usize,
    pub objective: f64,
    pub c_k: f64,
    pub d_k: f64,
    pub dx: f64,
    pub dtheta: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PalmTrace {
    pub rows: Vec<PalmTraceRow>,
}

#[derive(Clone, Debug)]
pub struct PalmSolution {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub trace: PalmTrace,
}

/// Conservative step curvatures before backtracking: `c_k` bounds the
/// Lipschitz constant of grad_x H via |A|_2^2 times the max curvature of rho
/// in r; `d_k` estimates |hess_theta H| by power iteration at the current
/// point.
pub fn step_sizes(problem: &PalmProblem, x: &DVector<f64>, theta: &[f64]) -> (f64, f64) {
    let gamma = 1.1;
    let l_rho = problem.penalty.curvature_bound(theta).unwrap_or(1.0);
    let c_k = gamma * spectral_norm_sq(&problem.a) * l_rho;
    let h = problem.hess_theta_misfit(x, theta);
    let d_k = gamma * sym_spectral_radius(&h);
    (c_k, d_k.max(1e-12))
}

pub fn palm_solve(
    problem: &PalmProblem,
    x0: Option<&DVector<f64>>,
    theta0: Option<&DVector<f64>>,
    opts: &PalmOptions,
) -> Result<PalmSolution> {
    let m = problem.m() as f64;
    let mut x = match x0 {
        Some(x) => x.clone(),
        None => least_squares(&problem.a, &problem.y)?,
    };
    let mut theta: DVector<f64> = match theta0 {
        Some(t) => {
            if !problem.domain.contains(t.as_slice(), 0.0) {
                return Err(Error::DomainViolation {
                    penalty: problem.penalty.key(),
                    detail: "theta0 must be strictly inside D".into(),
                });
            }
            t.clone()
        }
        None => problem.domain.interior.clone(),
    };

    let a_norm_sq = spectral_norm_sq(&problem.a);
    let mut trace = PalmTrace::default();
    let mut objective = problem.objective(&x, theta.as_slice())?;
    let mut converged = false;
    let mut iters = 0;

    for k in 0..opts.max_iter {
        iters = k + 1;
        // x block: prox-gradient with backtracked quadratic majorization.
        let l_rho = problem.penalty.curvature_bound(theta.as_slice()).unwrap_or(1.0);
        let mut c_k = (opts.gamma * a_norm_sq * l_rho).max(1e-12);
        let gx = problem.grad_x(&x, theta.as_slice());
        let h_x = problem.misfit(&x, theta.as_slice());
        let mut x_new = x.clone();
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let v = &x - &gx / c_k;
            let cand = problem.reg.prox(&v, 1.0 / c_k);
            let dxv = &cand - &x;
            let h_cand = problem.misfit(&cand, theta.as_slice());
            let quad = h_x + gx.dot(&dxv) + 0.5 * c_k * dxv.norm_squared();
            if h_cand <= quad + 1e-12 * (1.0 + h_x.abs()) {
                x_new = cand;
                accepted = true;
                break;
            }
            c_k *= 2.0;
        }
        if !accepted {
            return Err(Error::StepFailure {
                backtracks: opts.max_backtracks,
                detail: "x step: majorization never held".into(),
            });
        }

        // theta block: prox-gradient through prox of m log nc + delta_D.
        let h_theta = problem.hess_theta_misfit(&x_new, theta.as_slice());
        let mut d_k = (opts.gamma * sym_spectral_radius(&h_theta)).max(1e-12);
        let gt = problem.grad_theta(&x_new, theta.as_slice());
        let h_at_xnew = problem.misfit(&x_new, theta.as_slice());
        let obj_at_xnew =
            h_at_xnew + problem.reg.value(&x_new) + m * problem.model.log_nc(theta.as_slice())?;
        let mut theta_new = theta.clone();
        accepted = false;
        for _ in 0..=opts.max_backtracks {
            let phi = &theta - &gt / d_k;
            let cand = prox_r2_from(&theta, &phi, 1.0 / d_k, m, &problem.model, &problem.domain, 1e-8)?;
            let dt = &cand - &theta;
            let h_cand = problem.misfit(&x_new, cand.as_slice());
            let quad = h_at_xnew + gt.dot(&dt) + 0.5 * d_k * dt.norm_squared();
            let obj_cand =
                h_cand + problem.reg.value(&x_new) + m * problem.model.log_nc(cand.as_slice())?;
            let lin_ok = h_cand <= quad + 1e-12 * (1.0 + h_at_xnew.abs());
            let obj_ok = obj_cand <= obj_at_xnew + 1e-12 * (1.0 + obj_at_xnew.abs());
            let strict_drop = obj_cand <= obj_at_xnew - 1e-8 * (1.0 + obj_at_xnew.abs());
            if obj_ok && (lin_ok || strict_drop) {
                theta_new = cand;
                accepted = true;
                break;
            }
            d_k *= 2.0;
        }
        if !accepted {
            return Err(Error::StepFailure {
                backtracks: opts.max_backtracks,
                detail: "theta step: no sufficient decrease".into(),
            });
        }

        let dx = (&x_new - &x).norm();
        let dtheta = (&theta_new - &theta).norm();
        x = x_new;
        theta = theta_new;
        objective = problem.objective(&x, theta.as_slice())?;
        trace.rows.push(PalmTraceRow { iter: k, objective, c_k, d_k, dx, dtheta });

        let scale = 1.0 + (x.norm_squared() + theta.norm_squared()).sqrt();
        if dx.max(dtheta) <= opts.tol * scale {
            converged = true;
            break;
        }
    }

    Ok(PalmSolution { x, theta, objective, iters, converged, trace })
}

/// prox of `step * [scale * log nc + delta_D]` at `phi`:
/// `argmin_theta 1/(2 step) |theta - phi|^2 + scale * log nc(theta)` over D,
/// solved by damped Newton with log-barrier continuation, starting from the
/// interior projection of `phi`.
pub fn prox_r2(
    phi: &DVector<f64>,
    step: f64,
    scale: f64,
    model: &NormalizationModel,
    domain: &ShapeDomain,
) -> Result<DVector<f64>> {
    let start = interior_point_near(domain, phi);
    prox_r2_from(&start, phi, step, scale, model, domain, 1e-8)
}

/// Same as [`prox_r2`] but starting the Newton iteration at `start` (the
/// current PALM iterate), which keeps the prox objective nonincreasing from
/// the incumbent even when `log nc` is nonconvex.
pub fn prox_r2_from(
    start: &DVector<f64>,
    phi: &DVector<f64>,
    step: f64,
    scale: f64,
    model: &NormalizationModel,
    domain: &ShapeDomain,
    tol: f64,
) -> Result<DVector<f64>> {
    assert!(step > 0.0, "prox step must be positive");
    let k = phi.len();
    if k == 0 {
        return Ok(phi.clone());
    }
    if k > 4 {
        return Err(Error::ProxFailure { detail: format!("theta dimension {k} > 4 unsupported") });
    }

    let psi = |t: &DVector<f64>| -> Result<f64> {
        Ok((t - phi).norm_squared() / (2.0 * step) + scale * model.log_nc(t.as_slice())?)
    };
    let grad = |t: &DVector<f64>| -> Result<DVector<f64>> {
        Ok((t - phi) / step + scale * model.grad_log_nc(t.as_slice())?)
    };

    let mut theta = start.clone();
    if !domain.contains(theta.as_slice(), 0.0) {
        theta = interior_point_near(domain, start);
    }
    let has_constraints = domain.k_s() > 0;

    // Projected-gradient residual on the true objective. Numerically the
    // residual cannot drop below the rounding floor of (theta - phi)/step,
    // nor below the noise of the log-nc gradient itself (relative noise of
    // the quadrature times the scaled gradient magnitude).
    let pg_residual = |t: &DVector<f64>| -> Result<(f64, f64)> {
        let gl = model.grad_log_nc(t.as_slice())?;
        let g = (t - phi) / step + &gl * scale;
        let proj = domain.project(&(t - &g));
        let noise = 10.0 * model.derivative_noise() * scale * (1.0 + gl.norm());
        Ok(((t - proj).norm(), noise))
    };
    let resolution = |t: &DVector<f64>| 32.0 * f64::EPSILON * (1.0 + t.norm()) / step;
    let accepted =
        |pg: f64, noise: f64, t: &DVector<f64>| pg <= tol + noise || pg <= resolution(t);

    // One damped-Newton descent pass on psi + barrier(mu); returns false when
    // no further progress is possible at this level.
    let newton_pass = |theta: &mut DVector<f64>, mu: f64| -> Result<bool> {
        let mut g = grad(theta)?;
        let mut h = DMatrix::identity(k, k) / step + scale * model.hess_log_nc(theta.as_slice())?;
        if has_constraints && mu > 0.0 {
            let slack = domain.slack(theta.as_slice());
            for j in 0..domain.k_s() {
                let col = domain.bound_mat.column(j);
                g += mu / slack[j] * DVector::from_column_slice(col.as_slice());
                h += mu / (slack[j] * slack[j])
                    * DVector::from_column_slice(col.as_slice())
                    * col.transpose();
            }
        }
        // Levenberg shift keeps the direction descending when hess log nc is
        // indefinite (nonconvex families).
        let mut lam = 0.0;
        let dir = loop {
            let hs = &h + DMatrix::identity(k, k) * lam;
            if let Some(chol) = hs.clone().cholesky() {
                break -chol.solve(&g);
            }
            lam = if lam == 0.0 { 1e-10 * (1.0 + h.amax()) } else { lam * 10.0 };
            if lam > 1e16 * (1.0 + h.amax()) {
                return Err(Error::ProxFailure { detail: "Hessian shift exhausted".into() });
            }
        };
        // Fraction to boundary, then Armijo.
        let mut alpha: f64 = 1.0;
        if has_constraints {
            let slack = domain.slack(theta.as_slice());
            let dslack = -(domain.bound_mat.transpose() * &dir);
            for j in 0..slack.len() {
                if dslack[j] < 0.0 {
                    alpha = alpha.min(-0.995 * slack[j] / dslack[j]);
                }
            }
        }
        let psi_mu = |t: &DVector<f64>| -> Result<f64> {
            let mut v = psi(t)?;
            if has_constraints && mu > 0.0 {
                for s in domain.slack(t.as_slice()).iter() {
                    if *s <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    v -= mu * s.ln();
                }
            }
            Ok(v)
        };
        let f0 = psi_mu(theta)?;
        let slope = g.dot(&dir);
        // Once the Newton decrement predicts a decrease below the function's
        // floating-point resolution, Armijo cannot measure progress any
        // more; take the (boundary-capped) step outright.
        if 0.5 * slope.abs() <= 100.0 * f64::EPSILON * (1.0 + f0.abs()) {
            let cand = &*theta + &dir * alpha;
            if !has_constraints || domain.contains(cand.as_slice(), 0.0) {
                let moved = (&cand - &*theta).norm() > f64::EPSILON * (1.0 + theta.norm());
                *theta = cand;
                return Ok(moved);
            }
            return Ok(false);
        }
        for _ in 0..60 {
            let cand = &*theta + &dir * alpha;
            if !has_constraints || domain.contains(cand.as_slice(), 0.0) {
                let fc = psi_mu(&cand)?;
                if fc <= f0 + 1e-4 * alpha * slope || fc < f0 {
                    let moved = (&cand - &*theta).norm() > f64::EPSILON * (1.0 + theta.norm());
                    *theta = cand;
                    return Ok(moved);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-18 {
                break;
            }
        }
        Ok(false)
    };

    // Barrier continuation pulls the iterate onto active constraints without
    // ever leaving the strict interior ...
    if has_constraints {
        for &mu_base in &[1e-2, 1e-4, 1e-6, 1e-8, 1e-10] {
            let mu = mu_base * (1.0 + scale);
            for _ in 0..40 {
                if !newton_pass(&mut theta, mu)? {
                    break;
                }
            }
        }
    }
    // ... and a mu = 0 polish drives the projected gradient to tolerance.
    for _ in 0..60 {
        let (pg, noise) = pg_residual(&theta)?;
        if accepted(pg, noise, &theta) {
            return Ok(theta);
        }
        if !newton_pass(&mut theta, 0.0)? {
            break;
        }
    }

    let (pg, noise) = pg_residual(&theta)?;
    if accepted(pg, noise, &theta) {
        Ok(theta)
    } else {
        Err(Error::ProxFailure {
            detail: format!(
                "projected-gradient residual {pg:.3e} > {tol:.1e} at {:?}",
                theta.as_slice()
            ),
        })
    }
}

/// A strictly interior point close to `v`: project onto D, then blend toward
/// the designated interior point until all slacks are strictly positive.
fn interior_point_near(domain: &ShapeDomain, v: &DVector<f64>) -> DVector<f64> {
    if domain.k_s() == 0 {
        return v.clone();
    }
    let proj = domain.project(v);
    if domain.contains(proj.as_slice(), 1e-12) {
        return proj;
    }
    let mut t = 1e-8;
    while t < 1.0 {
        let cand = &proj * (1.0 - t) + &domain.interior * t;
        if domain.contains(cand.as_slice(), 0.0) {
            return cand;
        }
        t *= 10.0;
    }
    domain.interior.clone()
}
