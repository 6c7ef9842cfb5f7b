//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares solution via the normal equations (Cholesky), falling back
/// to a pivoted QR when A'A is numerically singular.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    if let Some(chol) = ata.clone().cholesky() {
        return Ok(chol.solve(&aty));
    }
    ata.lu()
        .solve(&aty)
        .ok_or_else(|| Error::InvalidInput("design matrix is rank deficient".into()))
}

/// Squared spectral norm of A by power iteration on A'A.
pub fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let v_next = w / norm;
        let new_lambda = (a * &v_next).norm_squared();
        if (new_lambda - lambda).abs() <= 1e-12 * new_lambda.max(1.0) {
            return new_lambda;
        }
        lambda = new_lambda;
        v = v_next;
    }
    lambda
}

/// Spectral radius (|lambda|_max) of a small symmetric matrix by power
/// iteration with a deterministic start.
pub fn sym_spectral_radius(h: &DMatrix<f64>) -> f64 {
    let k = h.nrows();
    if k == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(k, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda: f64 = 0.0;
    for _ in 0..100 {
        let w = h * &v;
        let norm = w.norm();
        if norm <= 1e-300 {
            return 0.0;
        }
        lambda = v.dot(&w).abs();
        v = w / norm;
    }
    lambda.max((h * &v).norm())
}
