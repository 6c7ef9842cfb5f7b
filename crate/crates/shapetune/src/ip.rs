//! Primal-dual interior-point method for self-tuning PLQ penalties.
//!
//! Solves the saddle-point system coupling model parameters `x`, per-residual
//! conjugate variables `u`, shape parameters `theta` and the barrier duals by
//! damped Newton on the relaxed KKT map `F_mu`. The iterate is
//! `z = (d1, q1, q2, u, x, theta)` with `d2 = c + H'theta - C'u` derived;
//! `d1, q1, q2, d2` stay strictly positive through a fraction-to-boundary
//! line search on the merit `|F_mu|`.
//!
//! The stacked residual, in block order:
//!
//! ```text
//! F1 = D1 q1 - mu 1
//! F2 = d1 + S'theta - s
//! F3 = D2 q2 - mu 1                      (per residual)
//! F4 = B(Ax - y) - G'theta - b - M u - C q2   (per residual)
//! F5 = A' B' u
//! F6 = -G u + m grad log nc(theta) + S q1 + H q2
//! ```
//!
//! The Newton system is solved by per-residual block elimination: the
//! diagonal complementarity blocks reduce each residual to a k_u x k_u
//! system `T3 = -(M + C T2^{-1} C')`, those collapse into the n x n
//! `T4 = A' B' T3^{-1} B A`, and everything lands in a final k_theta x
//! k_theta system `T5` containing `m hess log nc`. Cost per iteration is
//! O(m n^2 + n^3 + k_theta^3), and the factorization exists whenever the
//! three null-space conditions checked by [`check_implementability`] hold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::normalization::{NcMode, NormalizationModel};
use crate::penalty::{stacked_min_singular_value, Penalty, PlqAtom, ShapeDomain};

#[derive(Clone, Debug)]
pub struct IpProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalty: Penalty,
    pub atom: PlqAtom,
    pub domain: ShapeDomain,
    pub model: NormalizationModel,
}

impl IpProblem {
    /// Builds the saddle-point problem for `sum_i rho(y_i - <a_i, x>; theta)`.
    ///
    /// The stored atom has its residual map negated relative to the catalog
    /// form: the catalog writes `rho(r) = sup_u u'(B r - b_bar) - ...` and the
    /// KKT blocks below evaluate the map at `Ax - y = -r`, so `B -> -B` makes
    /// the solved objective the statistical one. For symmetric penalties the
    /// flip is invisible; for quantile-type penalties it is what makes the
    /// recovered tau match the generating tau.
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, penalty: Penalty) -> Result<Self> {
        let mut atom = penalty.plq_atom()?;
        atom.residual_map = -atom.residual_map;
        let domain = penalty.shape_domain();
        let model = NormalizationModel::new(penalty, NcMode::Auto)?;
        atom.validate(&domain)?;
        Ok(IpProblem { a, y, penalty, atom, domain, model })
    }

    pub fn with_domain(mut self, domain: ShapeDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Primal objective sum rho(y - Ax; theta) + m log nc(theta).
    pub fn objective(&self, x: &DVector<f64>, theta: &[f64]) -> Result<f64> {
        let r = &self.y - &self.a * x;
        let misfit: f64 = r.iter().map(|&ri| self.penalty.eval_raw(ri, theta)).sum();
        Ok(misfit + self.m() as f64 * self.model.log_nc(theta)?)
    }
}

/// Interior-point iterate; all four slack/dual groups strictly positive.
#[derive(Clone, Debug)]
pub struct IpState {
    pub d1: DVector<f64>,
    pub q1: DVector<f64>,
    /// Stacked per residual: k_c entries each.
    pub q2: DVector<f64>,
    /// Stacked per residual: k_u entries each.
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub mu: f64,
}

impl IpState {
    /// Derived slack d2_i = c + H'theta - C'u_i, stacked.
    pub fn d2(&self, problem: &IpProblem) -> DVector<f64> {
        let m = problem.m();
        let k_u = problem.atom.k_u();
        let k_c = problem.atom.k_c();
        let cbar = problem.atom.constraint_bound_at(self.theta.as_slice());
        let mut out = DVector::zeros(m * k_c);
        for i in 0..m {
            let ui = self.u.rows(i * k_u, k_u);
            let cu = problem.atom.constraint_mat.transpose() * ui;
            for j in 0..k_c {
                out[i * k_c + j] = cbar[j] - cu[j];
            }
        }
        out
    }

    pub fn positive(&self, problem: &IpProblem) -> bool {
        self.d1.iter().all(|&v| v > 0.0)
            && self.q1.iter().all(|&v| v > 0.0)
            && self.q2.iter().all(|&v| v > 0.0)
            && self.d2(problem).iter().all(|&v| v > 0.0)
            && problem.domain.contains(self.theta.as_slice(), 0.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial barrier parameter. None picks 0.1 x the smallest constraint
    /// bound at theta0 for the joint solve (wide enough for the theta
    /// refinement to travel, small enough that the barrier's theta push
    /// cannot cross the likelihood ridge on unbounded shape domains), and
    /// 1.0 for the convex fixed-theta solve.
    pub mu0: Option<f64>,
    pub mu_floor: f64,
    /// Fraction-to-boundary factor.
    pub boundary: f64,
    /// Initialize x by a fixed-theta convex presolve instead of plain least
    /// squares; the joint Newton iteration then starts inside its basin.
    pub presolve: bool,
}

impl Default for IpOptions {
    fn default() -> Self {
        IpOptions {
            tol: 1e-8,
            max_iter: 100,
            mu0: None,
            mu_floor: 1e-12,
            boundary: 0.995,
            presolve: true,
        }
    }
}


#[derive(Clone, Copy, Debug)]
pub struct IpTraceRow {
    pub iter: usize,
    pub merit: f64,
    pub mu: f64,
    pub alpha: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct IpSolution {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub state: IpState,
    /// Newton iterations of the joint (Algorithm-2) phase.
    pub iters: usize,
    /// Newton iterations spent in the fixed-theta presolve, when enabled.
    pub presolve_iters: usize,
    pub trace: Vec<IpTraceRow>,
    pub objective: f64,
}

/// Stacked F_mu(z) in the documented block order.
pub fn kkt_residual(state: &IpState, problem: &IpProblem) -> Result<DVector<f64>> {
    let m = problem.m();
    let n = problem.n();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let k_t = state.theta.len();
    let mu = state.mu;

    let mut f = DVector::zeros(2 * k_s + m * k_c + m * k_u + n + k_t);
    let mut off = 0;

    // F1 = D1 q1 - mu
    for j in 0..k_s {
        f[off + j] = state.d1[j] * state.q1[j] - mu;
    }
    off += k_s;
    // F2 = d1 + S'theta - s
    let s_t_theta = problem.domain.bound_mat.transpose() * &state.theta;
    for j in 0..k_s {
        f[off + j] = state.d1[j] + s_t_theta[j] - problem.domain.bound_vec[j];
    }
    off += k_s;
    // F3 = D2 q2 - mu
    let d2 = state.d2(problem);
    for idx in 0..m * k_c {
        f[off + idx] = d2[idx] * state.q2[idx] - mu;
    }
    off += m * k_c;
    // F4 per residual
    let bbar = atom.offset_at(state.theta.as_slice());
    let ax = &problem.a * &state.x;
    for i in 0..m {
        let ui = state.u.rows(i * k_u, k_u);
        let q2i = state.q2.rows(i * k_c, k_c);
        let mi = &atom.curvature * ui;
        let cq = &atom.constraint_mat * q2i;
        let resid = ax[i] - problem.y[i];
        for j in 0..k_u {
            f[off + i * k_u + j] = atom.residual_map[(j, 0)] * resid - bbar[j] - mi[j] - cq[j];
        }
    }
    off += m * k_u;
    // F5 = A' B' u
    let mut w = DVector::zeros(m);
    for i in 0..m {
        let ui = state.u.rows(i * k_u, k_u);
        w[i] = (atom.residual_map.transpose() * ui)[0];
    }
    let f5 = problem.a.transpose() * w;
    for j in 0..n {
        f[off + j] = f5[j];
    }
    off += n;
    // F6 = -G sum(u) + m grad log nc + S q1 + H sum(q2)
    if k_t > 0 {
        let mut su = DVector::zeros(k_u);
        let mut sq2 = DVector::zeros(k_c);
        for i in 0..m {
            su += state.u.rows(i * k_u, k_u);
            sq2 += state.q2.rows(i * k_c, k_c);
        }
        let grad = problem.model.grad_log_nc(state.theta.as_slice())?;
        let f6 = -(&atom.theta_to_offset * su)
            + grad * m as f64
            + &problem.domain.bound_mat * &state.q1
            + &atom.theta_to_constraint * sq2;
        for j in 0..k_t {
            f[off + j] = f6[j];
        }
    }
    Ok(f)
}

/// Directional derivative of F_mu at `state` applied to `v` (same layout as z).
pub fn kkt_jacobian_apply(state: &IpState, problem: &IpProblem, v: &DVector<f64>) -> Result<DVector<f64>> {
    let m = problem.m();
    let n = problem.n();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let k_t = state.theta.len();

    let (vd1, vq1, vq2, vu, vx, vt) = split_z(v, k_s, m, k_c, k_u, n, k_t);
    let d2 = state.d2(problem);

    let mut out = DVector::zeros(v.len());
    let mut off = 0;
    for j in 0..k_s {
        out[off + j] = state.q1[j] * vd1[j] + state.d1[j] * vq1[j];
    }
    off += k_s;
    let s_t_vt = problem.domain.bound_mat.transpose() * &vt;
    for j in 0..k_s {
        out[off + j] = vd1[j] + s_t_vt[j];
    }
    off += k_s;
    let h_t_vt = atom.theta_to_constraint.transpose() * &vt;
    for i in 0..m {
        let vui = vu.rows(i * k_u, k_u);
        let c_t_vu = atom.constraint_mat.transpose() * vui;
        for j in 0..k_c {
            let idx = i * k_c + j;
            // d(D2 q2)/dz . v = q2 * (H' vt - C' vu) + d2 * vq2
            out[off + idx] = state.q2[idx] * (h_t_vt[j] - c_t_vu[j]) + d2[idx] * vq2[idx];
        }
    }
    off += m * k_c;
    let g_t_vt = atom.theta_to_offset.transpose() * &vt;
    let a_vx = &problem.a * &vx;
    for i in 0..m {
        let vui = vu.rows(i * k_u, k_u);
        let vq2i = vq2.rows(i * k_c, k_c);
        let m_vu = &atom.curvature * vui;
        let c_vq2 = &atom.constraint_mat * vq2i;
        for j in 0..k_u {
            out[off + i * k_u + j] =
                atom.residual_map[(j, 0)] * a_vx[i] - g_t_vt[j] - m_vu[j] - c_vq2[j];
        }
    }
    off += m * k_u;
    let mut w = DVector::zeros(m);
    for i in 0..m {
        let vui = vu.rows(i * k_u, k_u);
        w[i] = (atom.residual_map.transpose() * vui)[0];
    }
    let r5 = problem.a.transpose() * w;
    for j in 0..n {
        out[off + j] = r5[j];
    }
    off += n;
    if k_t > 0 {
        let mut svu = DVector::zeros(k_u);
        let mut svq2 = DVector::zeros(k_c);
        for i in 0..m {
            svu += vu.rows(i * k_u, k_u);
            svq2 += vq2.rows(i * k_c, k_c);
        }
        let hess = problem.model.hess_log_nc(state.theta.as_slice())?;
        let r6 = -(&atom.theta_to_offset * svu)
            + hess * &vt * m as f64
            + &problem.domain.bound_mat * &vq1
            + &atom.theta_to_constraint * svq2;
        for j in 0..k_t {
            out[off + j] = r6[j];
        }
    }
    Ok(out)
}

#[allow(clippy::type_complexity)]
fn split_z(
    v: &DVector<f64>,
    k_s: usize,
    m: usize,
    k_c: usize,
    k_u: usize,
    n: usize,
    k_t: usize,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut off = 0;
    let d1 = v.rows(off, k_s).into_owned();
    off += k_s;
    let q1 = v.rows(off, k_s).into_owned();
    off += k_s;
    let q2 = v.rows(off, m * k_c).into_owned();
    off += m * k_c;
    let u = v.rows(off, m * k_u).into_owned();
    off += m * k_u;
    let x = v.rows(off, n).into_owned();
    off += n;
    let t = v.rows(off, k_t).into_owned();
    (d1, q1, q2, u, x, t)
}

/// Invert the small k_u x k_u T3 block, reporting the violated null-space
/// condition on failure.
fn invert_t3(t3: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = t3.amax().max(1e-300);
    match t3.nrows() {
        1 => {
            if t3[(0, 0)].abs() <= 1e-14 * scale {
                Err(singular("T3"))
            } else {
                Ok(DMatrix::from_element(1, 1, 1.0 / t3[(0, 0)]))
            }
        }
        2 => {
            let det = t3[(0, 0)] * t3[(1, 1)] - t3[(0, 1)] * t3[(1, 0)];
            if det.abs() <= 1e-14 * scale * scale {
                Err(singular("T3"))
            } else {
                Ok(DMatrix::from_row_slice(
                    2,
                    2,
                    &[t3[(1, 1)] / det, -t3[(0, 1)] / det, -t3[(1, 0)] / det, t3[(0, 0)] / det],
                ))
            }
        }
        _ => t3.clone().try_inverse().ok_or_else(|| singular("T3")),
    }
}

fn singular(block: &'static str) -> Error {
    let condition = match block {
        "T3" => "null(M) intersect null(C') = {0}",
        "T4" => "null(BA) = {0}",
        _ => "null(hess log nc) /\\ null(S') /\\ null(H') /\\ null(-G' + C T2^-1 H') = {0}",
    };
    Error::SingularBlock { block, condition }
}

/// Block-elimination solve of `grad F_mu(z) p = rhs`.
pub fn solve_newton_system(state: &IpState, problem: &IpProblem, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let m = problem.m();
    let n = problem.n();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let k_t = state.theta.len();
    let (r1, r2, r3, r4, r5, r6) = split_z(rhs, k_s, m, k_c, k_u, n, k_t);
    let d2 = state.d2(problem);

    let c_mat = &atom.constraint_mat;
    let h_mat = &atom.theta_to_constraint;
    let g_mat = &atom.theta_to_offset;
    let s_mat = &problem.domain.bound_mat;
    let b_map = &atom.residual_map;

    // Per-residual reductions, accumulated into row matrices so that the
    // O(m n^2) products are single matmuls.
    let mut s_vals = DVector::zeros(m); // s_i = B' T3_i^-1 B
    let mut n_rows = DMatrix::zeros(m, k_t); // B' T3_i^-1 K_i
    let mut g4_vals = DVector::zeros(m); // B' T3_i^-1 r4~_i
    let mut t3_invs: Vec<DMatrix<f64>> = Vec::with_capacity(m);
    let mut r4t: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut k_is: Vec<DMatrix<f64>> = Vec::with_capacity(m);

    let mut t5 = DMatrix::zeros(k_t, k_t);
    let mut r6t = r6.clone();

    for i in 0..m {
        let t2_inv = DVector::from_fn(k_c, |j, _| state.q2[i * k_c + j] / d2[i * k_c + j]);
        // T3_i = -(M + C diag(1/t2) C')
        let mut ct2 = c_mat.clone();
        for j in 0..k_c {
            ct2.column_mut(j).scale_mut(t2_inv[j]);
        }
        let t3 = -(&atom.curvature + &ct2 * c_mat.transpose());
        let t3_inv = invert_t3(&t3)?;
        // K_i = C diag(1/t2) H' - G'
        let k_i = &ct2 * h_mat.transpose() - g_mat.transpose();
        // r4~_i = r4_i + C (r3_i / d2_i)
        let r3_over_d2 = DVector::from_fn(k_c, |j, _| r3[i * k_c + j] / d2[i * k_c + j]);
        let r4i = r4.rows(i * k_u, k_u).into_owned() + c_mat * &r3_over_d2;

        let bt_t3 = b_map.transpose() * &t3_inv; // 1 x k_u
        s_vals[i] = (&bt_t3 * b_map)[(0, 0)];
        if k_t > 0 {
            let ni = &bt_t3 * &k_i; // 1 x k_t
            for j in 0..k_t {
                n_rows[(i, j)] = ni[(0, j)];
            }
            // T5 contributions that live per residual:
            //   - H diag(1/t2) H'  and  - K' T3^-1 K
            let mut ht2 = h_mat.clone();
            for j in 0..k_c {
                ht2.column_mut(j).scale_mut(t2_inv[j]);
            }
            t5 -= &ht2 * h_mat.transpose();
            t5 -= k_i.transpose() * &t3_inv * &k_i;
            // r6~ -= H (r3/d2) + K' T3^-1 r4~
            r6t -= h_mat * &r3_over_d2;
            r6t -= k_i.transpose() * (&t3_inv * &r4i);
        }
        g4_vals[i] = (&bt_t3 * &r4i)[(0, 0)];
        t3_invs.push(t3_inv);
        r4t.push(r4i);
        k_is.push(k_i);
    }

    // T4 = A' diag(s) A (negative definite); factor -T4.
    let mut a_scaled = problem.a.clone();
    for i in 0..m {
        a_scaled.row_mut(i).scale_mut(-s_vals[i]);
    }
    let neg_t4 = problem.a.transpose() * &a_scaled;
    let chol = neg_t4.cholesky().ok_or_else(|| singular("T4"))?;
    // g5 = A' g4 - r5
    let g5 = problem.a.transpose() * &g4_vals - &r5;
    // N = A' n_rows
    let n_mat = problem.a.transpose() * &n_rows; // n x k_t

    let p_theta = if k_t > 0 {
        // T5 += m hess log nc + S T1^-1 S' + N' T4^-1 N
        let hess = problem.model.hess_log_nc(state.theta.as_slice())?;
        t5 += hess * m as f64;
        for j in 0..k_s {
            let col = s_mat.column(j);
            let t1_inv = state.q1[j] / state.d1[j];
            t5 += t1_inv * DVector::from_column_slice(col.as_slice()) * col.transpose();
        }
        let t4_inv_n = -chol.solve(&n_mat); // T4^-1 N
        t5 += n_mat.transpose() * &t4_inv_n;
        // r6~ += -S(r1/d1) + S T1^-1 r2 + N' T4^-1 g5
        for j in 0..k_s {
            let col = DVector::from_column_slice(s_mat.column(j).as_slice());
            r6t -= &col * (r1[j] / state.d1[j]);
            r6t += &col * (state.q1[j] / state.d1[j] * r2[j]);
        }
        let t4_inv_g5 = -chol.solve(&g5);
        r6t += n_mat.transpose() * &t4_inv_g5;
        t5.clone().lu().solve(&r6t).ok_or_else(|| singular("T5"))?
    } else {
        DVector::zeros(0)
    };

    // Back-substitution.
    let rhs_x = if k_t > 0 { &g5 - &n_mat * &p_theta } else { g5.clone() };
    let p_x = -chol.solve(&rhs_x);

    let a_px = &problem.a * &p_x;
    let mut p_u = DVector::zeros(m * k_u);
    let mut p_q2 = DVector::zeros(m * k_c);
    for i in 0..m {
        let mut w = r4t[i].clone() - b_map * a_px[i];
        if k_t > 0 {
            w -= &k_is[i] * &p_theta;
        }
        let pu_i = &t3_invs[i] * w;
        for j in 0..k_u {
            p_u[i * k_u + j] = pu_i[j];
        }
        let c_t_pu = c_mat.transpose() * &pu_i;
        let h_t_pt = if k_t > 0 { h_mat.transpose() * &p_theta } else { DVector::zeros(k_c) };
        for j in 0..k_c {
            let idx = i * k_c + j;
            let t2_inv = state.q2[idx] / d2[idx];
            p_q2[idx] = r3[idx] / d2[idx] + t2_inv * (c_t_pu[j] - h_t_pt[j]);
        }
    }

    let mut p_d1 = DVector::zeros(k_s);
    let mut p_q1 = DVector::zeros(k_s);
    if k_s > 0 {
        let s_t_pt = s_mat.transpose() * &p_theta;
        for j in 0..k_s {
            p_d1[j] = r2[j] - s_t_pt[j];
            p_q1[j] = (r1[j] - state.q1[j] * p_d1[j]) / state.d1[j];
        }
    }

    let mut p = DVector::zeros(rhs.len());
    let mut off = 0;
    for j in 0..k_s {
        p[off + j] = p_d1[j];
    }
    off += k_s;
    for j in 0..k_s {
        p[off + j] = p_q1[j];
    }
    off += k_s;
    for j in 0..m * k_c {
        p[off + j] = p_q2[j];
    }
    off += m * k_c;
    for j in 0..m * k_u {
        p[off + j] = p_u[j];
    }
    off += m * k_u;
    for j in 0..n {
        p[off + j] = p_x[j];
    }
    off += n;
    for j in 0..p_theta.len() {
        p[off + j] = p_theta[j];
    }
    Ok(p)
}

/// Dense assembly of grad F_mu(z); the oracle the block solve is tested
/// against.
pub fn assemble_dense_jacobian(state: &IpState, problem: &IpProblem) -> Result<DMatrix<f64>> {
    let m = problem.m();
    let n = problem.n();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let k_t = state.theta.len();
    let dim = 2 * k_s + m * k_c + m * k_u + n + k_t;
    let d2 = state.d2(problem);

    let off_d1 = 0;
    let off_q1 = k_s;
    let off_q2 = 2 * k_s;
    let off_u = off_q2 + m * k_c;
    let off_x = off_u + m * k_u;
    let off_t = off_x + n;

    let mut jac = DMatrix::zeros(dim, dim);
    // Row block 1: Q1 d1 + D1 q1
    for j in 0..k_s {
        jac[(j, off_d1 + j)] = state.q1[j];
        jac[(j, off_q1 + j)] = state.d1[j];
    }
    // Row block 2: d1 + S'theta
    for j in 0..k_s {
        jac[(k_s + j, off_d1 + j)] = 1.0;
        for t in 0..k_t {
            jac[(k_s + j, off_t + t)] = problem.domain.bound_mat[(t, j)];
        }
    }
    // Row block 3 per residual: D2 dq2 + Q2 (H' dtheta - C' du)
    for i in 0..m {
        for j in 0..k_c {
            let row = 2 * k_s + i * k_c + j;
            let idx = i * k_c + j;
            jac[(row, off_q2 + idx)] = d2[idx];
            for l in 0..k_u {
                jac[(row, off_u + i * k_u + l)] = -state.q2[idx] * atom.constraint_mat[(l, j)];
            }
            for t in 0..k_t {
                jac[(row, off_t + t)] = state.q2[idx] * atom.theta_to_constraint[(t, j)];
            }
        }
    }
    // Row block 4 per residual: -C dq2 - M du + B a_i' dx - G' dtheta
    for i in 0..m {
        for j in 0..k_u {
            let row = 2 * k_s + m * k_c + i * k_u + j;
            for l in 0..k_c {
                jac[(row, off_q2 + i * k_c + l)] = -atom.constraint_mat[(j, l)];
            }
            for l in 0..k_u {
                jac[(row, off_u + i * k_u + l)] = -atom.curvature[(j, l)];
            }
            for l in 0..n {
                jac[(row, off_x + l)] = atom.residual_map[(j, 0)] * problem.a[(i, l)];
            }
            for t in 0..k_t {
                jac[(row, off_t + t)] = -atom.theta_to_offset[(t, j)];
            }
        }
    }
    // Row block 5: A' B' du
    for l in 0..n {
        let row = 2 * k_s + m * (k_c + k_u) + l;
        for i in 0..m {
            for j in 0..k_u {
                jac[(row, off_u + i * k_u + j)] = problem.a[(i, l)] * atom.residual_map[(j, 0)];
            }
        }
    }
    // Row block 6: S dq1 + H dq2 - G du + m hess log nc dtheta
    if k_t > 0 {
        let hess = problem.model.hess_log_nc(state.theta.as_slice())?;
        for t in 0..k_t {
            let row = 2 * k_s + m * (k_c + k_u) + n + t;
            for j in 0..k_s {
                jac[(row, off_q1 + j)] = problem.domain.bound_mat[(t, j)];
            }
            for i in 0..m {
                for j in 0..k_c {
                    jac[(row, off_q2 + i * k_c + j)] = atom.theta_to_constraint[(t, j)];
                }
                for j in 0..k_u {
                    jac[(row, off_u + i * k_u + j)] = -atom.theta_to_offset[(t, j)];
                }
            }
            for t2 in 0..k_t {
                jac[(row, off_t + t2)] = m as f64 * hess[(t, t2)];
            }
        }
    }
    Ok(jac)
}

/// Fraction-to-boundary cap followed by a backtracking Armijo search on the
/// merit `|F_mu|`; the step keeps d1, q1, q2, d2 and the theta slack
/// strictly positive.
pub fn line_search(state: &IpState, direction: &DVector<f64>, problem: &IpProblem, iter: usize) -> Result<f64> {
    let m = problem.m();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let k_t = state.theta.len();
    let n = problem.n();
    let (pd1, pq1, pq2, pu, _px, pt) = split_z(direction, k_s, m, k_c, k_u, n, k_t);

    let mut alpha_max = f64::INFINITY;
    let cap = |cur: f64, step: f64, alpha_max: &mut f64| {
        if step > 0.0 {
            *alpha_max = alpha_max.min(cur / step);
        }
    };
    for j in 0..k_s {
        cap(state.d1[j], pd1[j], &mut alpha_max);
        cap(state.q1[j], pq1[j], &mut alpha_max);
    }
    for idx in 0..m * k_c {
        cap(state.q2[idx], pq2[idx], &mut alpha_max);
    }
    // Derived slack: d2(alpha) = d2 - alpha (H'pt - C'pu_i).
    let d2 = state.d2(problem);
    let h_t_pt = atom.theta_to_constraint.transpose() * &pt;
    for i in 0..m {
        let pui = pu.rows(i * k_u, k_u);
        let c_t_pu = atom.constraint_mat.transpose() * pui;
        for j in 0..k_c {
            cap(d2[i * k_c + j], h_t_pt[j] - c_t_pu[j], &mut alpha_max);
        }
    }
    // Theta must stay strictly interior: slack(alpha) = slack + alpha S'pt.
    let slack = problem.domain.slack(state.theta.as_slice());
    let s_t_pt = problem.domain.bound_mat.transpose() * &pt;
    for j in 0..k_s {
        cap(slack[j], -s_t_pt[j], &mut alpha_max);
    }

    let mut alpha = (0.995 * alpha_max).min(1.0);
    let f0 = kkt_residual(state, problem)?.norm();
    for _ in 0..60 {
        let trial = apply_step(state, direction, alpha);
        if let Ok(f) = kkt_residual(&trial, problem) {
            if f.norm() <= (1.0 - 1e-4 * alpha) * f0 {
                return Ok(alpha);
            }
        }
        alpha *= 0.5;
        if alpha < 1e-12 {
            return Err(Error::LineSearchStall { alpha, iter });
        }
    }
    Err(Error::LineSearchStall { alpha, iter })
}

fn apply_step(state: &IpState, p: &DVector<f64>, alpha: f64) -> IpState {
    let k_s = state.d1.len();
    let m_kc = state.q2.len();
    let m_ku = state.u.len();
    let n = state.x.len();
    let k_t = state.theta.len();
    let mut off = 0;
    let d1 = &state.d1 - p.rows(off, k_s) * alpha;
    off += k_s;
    let q1 = &state.q1 - p.rows(off, k_s) * alpha;
    off += k_s;
    let q2 = &state.q2 - p.rows(off, m_kc) * alpha;
    off += m_kc;
    let u = &state.u - p.rows(off, m_ku) * alpha;
    off += m_ku;
    let x = &state.x - p.rows(off, n) * alpha;
    off += n;
    let theta = &state.theta - p.rows(off, k_t) * alpha;
    IpState { d1, q1, q2, u, x, theta, mu: state.mu }
}

/// Sign-fraction moment estimate of the asymmetry parameter at the LS
/// residuals: for the quantile density P(r >= 0) = tau, and the quantile
/// Huber with kappa near 1 behaves the same to first order. Starting theta
/// here instead of the domain midpoint keeps the long theta trek out of the
/// late, small-mu iterations where it would stall the line search.
fn moment_theta(problem: &IpProblem, resid: &DVector<f64>) -> Option<DVector<f64>> {
    let frac_nonneg =
        resid.iter().filter(|&&r| r >= 0.0).count() as f64 / resid.len().max(1) as f64;
    let tau = frac_nonneg.clamp(0.05, 0.95);
    let guess = match problem.penalty {
        Penalty::Quantile => DVector::from_vec(vec![tau]),
        Penalty::QuantileHuber => {
            DVector::from_vec(Penalty::quantile_huber_theta(tau, 1.0).to_vec())
        }
        _ => return None,
    };
    problem.domain.contains(guess.as_slice(), 0.0).then_some(guess)
}

/// Interior-shrunk conjugate argmax at the given residuals: dual variables
/// start near their optimal faces with a safety margin instead of at zero,
/// which would send the first Newton directions crashing into the boundary.
fn warm_duals(atom: &PlqAtom, resid: &DVector<f64>, cbar: &DVector<f64>, margin: f64) -> DVector<f64> {
    let m = resid.len();
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let mut u = DVector::zeros(m * k_u);
    let damp = &atom.curvature + DMatrix::identity(k_u, k_u);
    let damp_lu = damp.lu();
    for i in 0..m {
        let w = atom.residual_map.clone() * resid[i];
        if let Some(cand) = damp_lu.solve(&DVector::from_column_slice(w.as_slice())) {
            let cu = atom.constraint_mat.transpose() * &cand;
            let mut gamma: f64 = margin;
            for j in 0..k_c {
                if cu[j] > 0.0 {
                    gamma = gamma.min(margin * cbar[j] / cu[j]);
                }
            }
            for j in 0..k_u {
                u[i * k_u + j] = gamma * cand[j];
            }
        }
    }
    u
}

fn initial_state(
    problem: &IpProblem,
    x: DVector<f64>,
    u: Option<DVector<f64>>,
    theta: DVector<f64>,
    mu0: f64,
) -> Result<IpState> {
    let m = problem.m();
    let atom = &problem.atom;
    let k_c = atom.k_c();
    if !problem.domain.contains(theta.as_slice(), 0.0) {
        return Err(Error::DomainViolation {
            penalty: problem.penalty.key(),
            detail: "theta0 must be strictly inside D".into(),
        });
    }
    let d1 = problem.domain.slack(theta.as_slice());
    let cbar = atom.constraint_bound_at(theta.as_slice());
    if cbar.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(
            "constraint bound c + H'theta must be strictly positive at theta0".into(),
        ));
    }
    let resid = &problem.a * &x - &problem.y;
    let u = u.unwrap_or_else(|| warm_duals(atom, &resid, &cbar, 0.5));
    let q1 = DVector::from_fn(d1.len(), |j, _| mu0 / d1[j]);
    let state0 = IpState { d1, q1, q2: DVector::zeros(m * k_c), u, x, theta, mu: mu0 };
    let d2 = state0.d2(problem);
    if d2.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput("warm duals leave no slack in C'u <= c_bar".into()));
    }
    let q2 = DVector::from_fn(m * k_c, |idx, _| mu0 / d2[idx]);
    Ok(IpState { q2, ..state0 })
}

/// Damped-Newton interior-point iteration: solve, line-search on `|F_mu|`,
/// step, then set `mu = 0.1 x (mean complementarity)`. Terminates when
/// `|F_0|_inf <= tol` and `mu <= 1e-10`.
///
/// Initialization: `theta0` (or a sign-fraction moment estimate for the
/// quantile families, or the domain interior point), x from a fixed-theta
/// convex presolve at that theta (falling back to least squares), and duals
/// warm-started at interior-shrunk conjugate argmaxes.
pub fn ip_solve(problem: &IpProblem, theta0: Option<&DVector<f64>>, opts: &IpOptions) -> Result<IpSolution> {
    let x_ls = least_squares(&problem.a, &problem.y)?;
    let theta = match theta0 {
        Some(t) => t.clone(),
        None => moment_theta(problem, &(&problem.y - &problem.a * &x_ls))
            .unwrap_or_else(|| problem.domain.interior.clone()),
    };
    // Travel corridor: a theta step of size delta moves the dual polyhedron
    // bounds by O(delta), so the slacks of active constraints (width mu/q2)
    // must accommodate it; mu0 ~ 0.1 min c_bar keeps that workable while
    // staying below the level where the barrier's theta push (weight m mu)
    // could shove unbounded shape domains past the likelihood ridge.
    let cbar0 = problem.atom.constraint_bound_at(theta.as_slice());
    let cbar_min = cbar0.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu0 = opts.mu0.unwrap_or_else(|| (0.1 * cbar_min).clamp(1e-6, 1e-1));
    let mut presolve_iters = 0;
    let mut state = match if opts.presolve {
        fixed_theta_core(&problem.a, &problem.y, &problem.atom, theta.as_slice(), opts).ok()
    } else {
        None
    } {
        Some(sol) => {
            presolve_iters = sol.iters;
            // Carry the converged primal-dual pair over: the active duals
            // scale with the residuals and rebuilding them as mu/d2 would
            // put the iterate far off the KKT manifold. Pull each u inside
            // just enough that its complementarity products sit at mu0, and
            // floor the inactive duals the same way: the joint phase then
            // starts centered at mu0 with only the theta block nonzero.
            let m = problem.m();
            let atom = &problem.atom;
            let (k_u, k_c) = (atom.k_u(), atom.k_c());
            let cbar = atom.constraint_bound_at(theta.as_slice());
            let mut u = sol.u;
            for i in 0..m {
                let ui = u.rows(i * k_u, k_u).into_owned();
                let cu = atom.constraint_mat.transpose() * &ui;
                // Largest gamma in [0, 1] with d2(gamma u) >= mu0 / q2 hat.
                let mut gamma: f64 = 1.0;
                for j in 0..k_c {
                    let d2_hat = cbar[j] - cu[j];
                    let target = (mu0 / sol.q2[i * k_c + j].max(1e-8)).min(0.5 * cbar[j]);
                    if d2_hat < target {
                        // d2(gamma u) = (1 - gamma) cbar + gamma d2_hat
                        let g = (cbar[j] - target) / (cbar[j] - d2_hat).max(1e-300);
                        gamma = gamma.min(g.clamp(0.0, 1.0));
                    }
                }
                for j in 0..k_u {
                    u[i * k_u + j] = gamma * ui[j];
                }
            }
            let d1 = problem.domain.slack(theta.as_slice());
            let q1 = DVector::from_fn(d1.len(), |j, _| mu0 / d1[j]);
            let mut st = IpState { d1, q1, q2: sol.q2, u, x: sol.x, theta, mu: mu0 };
            let d2 = st.d2(problem);
            for idx in 0..st.q2.len() {
                st.q2[idx] = st.q2[idx].max(mu0 / d2[idx]);
            }
            let compl = st.d1.dot(&st.q1) + d2.dot(&st.q2);
            st.mu = compl / (st.d1.len() + d2.len()) as f64;
            st
        }
        None => initial_state(problem, x_ls, None, theta, mu0)?,
    };
    // Numeric solvability check at the initial point.
    let report = check_implementability(
        &problem.atom,
        &problem.domain,
        &problem.a,
        state.theta.as_slice(),
        &problem.model,
    )?;
    if !report.null_m_c.0 {
        return Err(singular("T3"));
    }
    if !report.null_ba.0 {
        return Err(singular("T4"));
    }

    let mut trace = Vec::new();
    let mut recenters = 0usize;
    for iter in 0..opts.max_iter {
        let f_mu = kkt_residual(&state, problem)?;
        let f0 = {
            let mut z0 = state.clone();
            z0.mu = 0.0;
            kkt_residual(&z0, problem)?.amax()
        };
        if f0 <= opts.tol && state.mu <= 1e-10 {
            let objective = problem.objective(&state.x, state.theta.as_slice())?;
            return Ok(IpSolution {
                x: state.x.clone(),
                theta: state.theta.clone(),
                iters: iter,
                presolve_iters,
                objective,
                trace,
                state,
            });
        }
        let p = solve_newton_system(&state, problem, &f_mu)?;
        let alpha = match line_search(&state, &p, problem, iter) {
            Ok(a) => a,
            Err(stall @ Error::LineSearchStall { .. }) => {
                // Watchdog: a dead line search means the iterate is pinned in
                // a complementarity corridor too thin for the current mu.
                // Recenter by widening the barrier and retry.
                if recenters < 4 {
                    recenters += 1;
                    state.mu = (state.mu * 100.0).min(mu0);
                    continue;
                }
                return Err(stall);
            }
            Err(e) => return Err(e),
        };
        state = apply_step(&state, &p, alpha);
        debug_assert!(state.positive(problem));
        // mu <- 0.1 * average complementarity over both constraint sets,
        // applied only after a (near-)full step so the corridor does not
        // shrink while the line search is still damped; mu never increases.
        let d2 = state.d2(problem);
        let compl = state.d1.dot(&state.q1) + d2.dot(&state.q2);
        let count = state.d1.len() + d2.len();
        if count == 0 {
            // No inequality structure at all (pure least squares): the
            // barrier parameter is vacuous.
            state.mu = opts.mu_floor;
        } else if alpha >= 0.5 {
            let avg = compl / count as f64;
            state.mu = (0.1 * avg).clamp(opts.mu_floor, state.mu);
        }
        let objective = problem.objective(&state.x, state.theta.as_slice())?;
        trace.push(IpTraceRow { iter, merit: f_mu.norm(), mu: state.mu, alpha, objective });
    }
    let f0 = {
        let mut z0 = state.clone();
        z0.mu = 0.0;
        kkt_residual(&z0, problem)?.amax()
    };
    Err(Error::NonConvergence { solver: "ip", iters: opts.max_iter, residual: f0 })
}

/// Convex inner solve with theta pinned: the same per-residual machinery
/// without the d1/q1/theta blocks. Used for the l1 baseline and the value
/// function scan. Takes the catalog atom and applies the same residual-sign
/// convention as [`IpProblem::new`] (the objective is rho(y - Ax)).
pub fn ip_solve_fixed_theta(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    catalog_atom: &PlqAtom,
    theta: &[f64],
    opts: &IpOptions,
) -> Result<DVector<f64>> {
    let mut atom = catalog_atom.clone();
    atom.residual_map = -&atom.residual_map;
    Ok(fixed_theta_core(a, y, &atom, theta, opts)?.x)
}

pub(crate) struct FixedThetaSolution {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub q2: DVector<f64>,
    pub iters: usize,
}

/// Fixed-theta solve on an atom already carrying the y - Ax sign convention.
fn fixed_theta_core(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    atom: &PlqAtom,
    theta: &[f64],
    opts: &IpOptions,
) -> Result<FixedThetaSolution> {
    let m = a.nrows();
    let n = a.ncols();
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let bbar = atom.offset_at(theta);
    let cbar = atom.constraint_bound_at(theta);
    if cbar.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput("c_bar must be strictly positive at pinned theta".into()));
    }

    // The fixed-theta problem is convex with no theta coupling, so the
    // large-mu central path is harmless; mu0 = 1 gives wide corridors.
    let mu0 = opts.mu0.unwrap_or(1.0);
    let mut x = least_squares(a, y)?;
    let mut u = warm_duals(atom, &(a * &x - y), &cbar, 0.5);
    let mut mu = mu0;
    let mut q2;

    let d2_of = |u: &DVector<f64>| -> DVector<f64> {
        let mut d2 = DVector::zeros(m * k_c);
        for i in 0..m {
            let cu = atom.constraint_mat.transpose() * u.rows(i * k_u, k_u);
            for j in 0..k_c {
                d2[i * k_c + j] = cbar[j] - cu[j];
            }
        }
        d2
    };
    let residual = |x: &DVector<f64>, u: &DVector<f64>, q2: &DVector<f64>, mu: f64| -> DVector<f64> {
        let mut f = DVector::zeros(m * (k_c + k_u) + n);
        let d2 = d2_of(u);
        for idx in 0..m * k_c {
            f[idx] = d2[idx] * q2[idx] - mu;
        }
        let ax = a * x;
        for i in 0..m {
            let ui = u.rows(i * k_u, k_u);
            let mi = &atom.curvature * ui;
            let cq = &atom.constraint_mat * q2.rows(i * k_c, k_c);
            for j in 0..k_u {
                f[m * k_c + i * k_u + j] =
                    atom.residual_map[(j, 0)] * (ax[i] - y[i]) - bbar[j] - mi[j] - cq[j];
            }
        }
        let mut w = DVector::zeros(m);
        for i in 0..m {
            w[i] = (atom.residual_map.transpose() * u.rows(i * k_u, k_u))[0];
        }
        let f5 = a.transpose() * w;
        for j in 0..n {
            f[m * (k_c + k_u) + j] = f5[j];
        }
        f
    };
    {
        let d2 = d2_of(&u);
        q2 = DVector::from_fn(m * k_c, |idx, _| mu0 / d2[idx]);
    }

    for iter in 0..opts.max_iter {
        let f = residual(&x, &u, &q2, mu);
        let f0 = residual(&x, &u, &q2, 0.0).amax();
        if f0 <= opts.tol && mu <= 1e-10 {
            return Ok(FixedThetaSolution { x, u, q2, iters: iter });
        }
        // Block elimination without the theta coupling.
        let d2 = d2_of(&u);
        let mut s_vals = DVector::zeros(m);
        let mut g4_vals = DVector::zeros(m);
        let mut t3_invs = Vec::with_capacity(m);
        let mut r4t = Vec::with_capacity(m);
        for i in 0..m {
            let t2_inv = DVector::from_fn(k_c, |j, _| q2[i * k_c + j] / d2[i * k_c + j]);
            let mut ct2 = atom.constraint_mat.clone();
            for j in 0..k_c {
                ct2.column_mut(j).scale_mut(t2_inv[j]);
            }
            let t3 = -(&atom.curvature + &ct2 * atom.constraint_mat.transpose());
            let t3_inv = invert_t3(&t3)?;
            let r3_over_d2 =
                DVector::from_fn(k_c, |j, _| f[i * k_c + j] / d2[i * k_c + j]);
            let r4i = f.rows(m * k_c + i * k_u, k_u).into_owned()
                + &atom.constraint_mat * &r3_over_d2;
            let bt_t3 = atom.residual_map.transpose() * &t3_inv;
            s_vals[i] = (&bt_t3 * &atom.residual_map)[(0, 0)];
            g4_vals[i] = (&bt_t3 * &r4i)[(0, 0)];
            t3_invs.push(t3_inv);
            r4t.push(r4i);
        }
        let mut a_scaled = a.clone();
        for i in 0..m {
            a_scaled.row_mut(i).scale_mut(-s_vals[i]);
        }
        let neg_t4 = a.transpose() * &a_scaled;
        let chol = neg_t4.cholesky().ok_or_else(|| singular("T4"))?;
        let r5 = f.rows(m * (k_c + k_u), n).into_owned();
        let g5 = a.transpose() * &g4_vals - &r5;
        let p_x = -chol.solve(&g5);
        let a_px = a * &p_x;
        let mut p_u = DVector::zeros(m * k_u);
        let mut p_q2 = DVector::zeros(m * k_c);
        for i in 0..m {
            let w = r4t[i].clone() - &atom.residual_map * a_px[i];
            let pu_i = &t3_invs[i] * w;
            let c_t_pu = atom.constraint_mat.transpose() * &pu_i;
            for j in 0..k_u {
                p_u[i * k_u + j] = pu_i[j];
            }
            for j in 0..k_c {
                let idx = i * k_c + j;
                p_q2[idx] = f[idx] / d2[idx] + q2[idx] / d2[idx] * c_t_pu[j];
            }
        }

        // Fraction-to-boundary on q2 and d2, then merit backtracking.
        let mut alpha_max = f64::INFINITY;
        for idx in 0..m * k_c {
            if p_q2[idx] > 0.0 {
                alpha_max = alpha_max.min(q2[idx] / p_q2[idx]);
            }
        }
        for i in 0..m {
            let c_t_pu = atom.constraint_mat.transpose() * p_u.rows(i * k_u, k_u);
            for j in 0..k_c {
                let delta = -c_t_pu[j];
                if delta > 0.0 {
                    alpha_max = alpha_max.min(d2[i * k_c + j] / delta);
                }
            }
        }
        let mut alpha = (opts.boundary * alpha_max).min(1.0);
        let f_norm = f.norm();
        let mut stepped = false;
        for _ in 0..60 {
            let xn = &x - &p_x * alpha;
            let un = &u - &p_u * alpha;
            let qn = &q2 - &p_q2 * alpha;
            if residual(&xn, &un, &qn, mu).norm() <= (1.0 - 1e-4 * alpha) * f_norm {
                x = xn;
                u = un;
                q2 = qn;
                stepped = true;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
        if !stepped {
            return Err(Error::LineSearchStall { alpha, iter });
        }
        if k_c == 0 {
            mu = opts.mu_floor;
        } else {
            let d2n = d2_of(&u);
            let sigma = if alpha >= 0.5 { 0.1 } else { 1.0 };
            mu = (sigma * d2n.dot(&q2) / (m * k_c) as f64).max(opts.mu_floor);
        }
    }
    Err(Error::NonConvergence { solver: "ip_fixed_theta", iters: opts.max_iter, residual: f64::NAN })
}

/// Numeric evaluation of the three solvability conditions plus the stronger
/// strong-concavity sufficient condition (which typically fails: log nc is
/// convex for catalog entries, so the null-space condition is the operative
/// one). Fields are (pass, margin).
#[derive(Clone, Debug)]
pub struct ImplementabilityReport {
    pub null_m_c: (bool, f64),
    pub null_ba: (bool, f64),
    pub null_t5_stack: (bool, f64),
    pub strongly_concave_log_nc: (bool, f64),
}

pub fn check_implementability(
    atom: &PlqAtom,
    domain: &ShapeDomain,
    a: &DMatrix<f64>,
    theta: &[f64],
    model: &NormalizationModel,
) -> Result<ImplementabilityReport> {
    const TOL: f64 = 1e-10;
    let s1 = stacked_min_singular_value(&atom.curvature, &atom.constraint_mat);
    // BA has per-residual rows B a_i'; its singular values are |B| sigma(A).
    let b_norm = atom.residual_map.norm();
    let sv = a.clone().svd(false, false).singular_values;
    let s2 = b_norm * sv.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));

    let k_t = theta.len();
    let hess = model.hess_log_nc(theta)? * a.nrows() as f64;
    // Stack [m hess; S'; H'; (C T2^-1 H' - G')'] with T2 = I as reference.
    let k_rows = atom.constraint_mat.clone() * atom.theta_to_constraint.transpose()
        - atom.theta_to_offset.transpose();
    let rows = k_t + domain.k_s() + atom.k_c() + atom.k_u();
    let mut stack = DMatrix::zeros(rows, k_t);
    stack.view_mut((0, 0), (k_t, k_t)).copy_from(&hess);
    stack
        .view_mut((k_t, 0), (domain.k_s(), k_t))
        .copy_from(&domain.bound_mat.transpose());
    stack
        .view_mut((k_t + domain.k_s(), 0), (atom.k_c(), k_t))
        .copy_from(&atom.theta_to_constraint.transpose());
    stack
        .view_mut((k_t + domain.k_s() + atom.k_c(), 0), (atom.k_u(), k_t))
        .copy_from(&k_rows);
    let s3 = if k_t == 0 {
        f64::INFINITY
    } else {
        stack.svd(false, false).singular_values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    };

    let lam_max = if k_t == 0 {
        f64::NEG_INFINITY
    } else {
        let eig = model.hess_log_nc(theta)?.symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    };

    Ok(ImplementabilityReport {
        null_m_c: (s1 > TOL, s1),
        null_ba: (s2 > TOL, s2),
        null_t5_stack: (s3 > TOL, s3),
        strongly_concave_log_nc: (lam_max < 0.0, -lam_max),
    })
}

#[cfg(test)]
mod tests;
