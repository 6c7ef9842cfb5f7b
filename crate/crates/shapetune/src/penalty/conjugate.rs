//! Exact evaluation of the conjugate sup for small PLQ atoms.
//!
//! Solves `sup_u { u' w - 1/2 u' M u  :  C' u <= c_bar }` for `k_u <= 2` by
//! enumerating the KKT cases of the tiny QP: the unconstrained stationary
//! point, stationary points on each constraint face, and all vertices. An
//! explicit recession check reports unbounded problems (the penalty is then
//! not a density at this theta). This routine is the test oracle for the
//! closed-form primal evaluations.

use nalgebra::{DMatrix, DVector};

use super::atom::PlqAtom;
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;

pub fn eval_conjugate_sup(atom: &PlqAtom, r: f64, theta: &[f64]) -> Result<f64> {
    let k_u = atom.k_u();
    if k_u > 2 {
        return Err(Error::AtomTooLarge { k_u });
    }
    let w = atom.residual_map.clone() * r - atom.offset_at(theta);
    let w = DVector::from_column_slice(w.as_slice());
    let c_bar = atom.constraint_bound_at(theta);
    let m = &atom.curvature;
    let c = &atom.constraint_mat;

    // Recession: a direction d with C'd <= 0, Md = 0 and w'd > 0 is a
    // certificate of an unbounded sup.
    for d in null_space_dirs(m) {
        for sgn in [1.0f64, -1.0] {
            let dir = &d * sgn;
            let in_cone = (c.transpose() * &dir).iter().all(|&v| v <= FEAS_TOL);
            if in_cone && w.dot(&dir) > FEAS_TOL {
                return Err(Error::UnboundedConjugate {
                    detail: format!("recession direction {:?} has positive slope", dir.as_slice()),
                });
            }
        }
    }

    let feasible = |u: &DVector<f64>| -> bool {
        let viol = c.transpose() * u - &c_bar;
        viol.iter().all(|&v| v <= FEAS_TOL * (1.0 + c_bar.amax()))
    };
    let objective = |u: &DVector<f64>| -> f64 { u.dot(&w) - 0.5 * u.dot(&(m * u)) };

    let mut best: Option<f64> = None;
    let mut consider = |u: DVector<f64>| {
        if u.iter().all(|v| v.is_finite()) && feasible(&u) {
            let val = objective(&u);
            if best.is_none_or(|b| val > b) {
                best = Some(val);
            }
        }
    };

    // u = 0 is always feasible by the atom invariant; seeds the search.
    consider(DVector::zeros(k_u));

    // Unconstrained stationary point M u = w.
    if let Some(u) = m.clone().lu().solve(&w) {
        if (m * &u - &w).amax() <= 1e-8 * (1.0 + w.amax()) {
            consider(u);
        }
    }

    let k_c = atom.k_c();
    // Single active constraint: stationary point on the face C_i' u = c_bar_i.
    for i in 0..k_c {
        let ci = c.column(i).into_owned();
        let mut kkt = DMatrix::zeros(k_u + 1, k_u + 1);
        kkt.view_mut((0, 0), (k_u, k_u)).copy_from(m);
        for row in 0..k_u {
            kkt[(row, k_u)] = ci[row];
            kkt[(k_u, row)] = ci[row];
        }
        let mut rhs = DVector::zeros(k_u + 1);
        for row in 0..k_u {
            rhs[row] = w[row];
        }
        rhs[k_u] = c_bar[i];
        if let Some(sol) = kkt.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                let u = DVector::from_column_slice(&sol.as_slice()[..k_u]);
                consider(u);
            }
        }
    }

    // Vertices: pairs of active constraints (only meaningful for k_u = 2).
    if k_u == 2 {
        for i in 0..k_c {
            for j in (i + 1)..k_c {
                let mat = DMatrix::from_columns(&[c.column(i).into_owned(), c.column(j).into_owned()])
                    .transpose();
                let rhs = DVector::from_vec(vec![c_bar[i], c_bar[j]]);
                if let Some(u) = mat.clone().lu().solve(&rhs) {
                    if (mat * &u - &rhs).amax() <= 1e-9 * (1.0 + c_bar.amax()) {
                        consider(u);
                    }
                }
            }
        }
    } else if k_u == 1 {
        // Interval endpoints.
        for i in 0..k_c {
            let ci = c[(0, i)];
            if ci.abs() > 1e-14 {
                consider(DVector::from_vec(vec![c_bar[i] / ci]));
            }
        }
    }

    best.ok_or_else(|| Error::InvalidInput("conjugate sup found no feasible candidate".into()))
}

/// Orthonormal directions spanning null(M) for a small symmetric PSD M.
fn null_space_dirs(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let k = m.nrows();
    if k == 0 {
        return vec![];
    }
    let scale = m.amax().max(1.0);
    let eig = m.clone().symmetric_eigen();
    let mut dirs = Vec::new();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() <= 1e-12 * scale {
            dirs.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    dirs
}
