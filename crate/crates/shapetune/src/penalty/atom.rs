//! Conjugate PLQ descriptions and polyhedral shape domains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Conjugate description of one scalar PLQ penalty,
///
/// ```text
/// rho(r; theta) = sup_u { u' (B r - b_bar) - 1/2 u' M u  :  C' u <= c_bar }
/// b_bar = G' theta + b,    c_bar = H' theta + c
/// ```
///
/// with `M` symmetric PSD and `0` feasible for every `theta` in the domain.
#[derive(Clone, Debug)]
pub struct PlqAtom {
    /// B: k_u x 1 map from the scalar residual into the dual space.
    pub residual_map: DMatrix<f64>,
    /// b: constant part of the offset b_bar.
    pub offset: DVector<f64>,
    /// C: k_u x k_c constraint normals of the dual polyhedron.
    pub constraint_mat: DMatrix<f64>,
    /// c: constant part of the bound c_bar.
    pub constraint_off: DVector<f64>,
    /// M: k_u x k_u PSD curvature of the conjugate.
    pub curvature: DMatrix<f64>,
    /// G: k_theta x k_u affine theta-dependence of the offset.
    pub theta_to_offset: DMatrix<f64>,
    /// H: k_theta x k_c affine theta-dependence of the constraint bound.
    pub theta_to_constraint: DMatrix<f64>,
}

impl PlqAtom {
    pub fn k_u(&self) -> usize {
        self.residual_map.nrows()
    }

    pub fn k_c(&self) -> usize {
        self.constraint_mat.ncols()
    }

    pub fn k_theta(&self) -> usize {
        self.theta_to_offset.nrows()
    }

    /// b_bar = G' theta + b
    pub fn offset_at(&self, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        self.theta_to_offset.transpose() * th + &self.offset
    }

    /// c_bar = H' theta + c
    pub fn constraint_bound_at(&self, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        self.theta_to_constraint.transpose() * th + &self.constraint_off
    }

    /// Checks the structural invariants: M symmetric PSD, u = 0 feasible at
    /// the domain's interior point, and null(M) and null(C') intersecting
    /// only at zero.
    pub fn validate(&self, domain: &ShapeDomain) -> Result<()> {
        let k_u = self.k_u();
        let m = &self.curvature;
        if m.nrows() != k_u || m.ncols() != k_u {
            return Err(Error::InvalidInput("curvature M has wrong dimensions".into()));
        }
        if (m - m.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidInput("curvature M is not symmetric".into()));
        }
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
            return Err(Error::InvalidInput("curvature M is not PSD".into()));
        }
        let cbar = self.constraint_bound_at(domain.interior.as_slice());
        if cbar.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "u = 0 infeasible at domain interior point (H' theta + c has a negative entry)"
                    .into(),
            ));
        }
        if stacked_min_singular_value(m, &self.constraint_mat) <= 1e-10 {
            return Err(Error::InvalidInput(
                "null(M) and null(C') share a nonzero direction".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest singular value of [M; C'] stacked; positive iff
/// null(M) and null(C') intersect trivially.
pub fn stacked_min_singular_value(m: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let k_u = m.nrows();
    let mut stacked = DMatrix::zeros(k_u + c.ncols(), k_u);
    stacked.view_mut((0, 0), (k_u, k_u)).copy_from(m);
    stacked.view_mut((k_u, 0), (c.ncols(), k_u)).copy_from(&c.transpose());
    if stacked.ncols() == 0 {
        return f64::INFINITY;
    }
    stacked.svd(false, false).singular_values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Polyhedral shape-parameter domain `D = { theta : S' theta <= s }` with a
/// designated strictly interior point.
#[derive(Clone, Debug)]
pub struct ShapeDomain {
    /// S: k_theta x k_s
    pub bound_mat: DMatrix<f64>,
    /// s: k_s
    pub bound_vec: DVector<f64>,
    /// A point with S' theta < s strictly.
    pub interior: DVector<f64>,
}

impl ShapeDomain {
    pub fn new(bound_mat: DMatrix<f64>, bound_vec: DVector<f64>, interior: DVector<f64>) -> Result<Self> {
        let d = ShapeDomain { bound_mat, bound_vec, interior };
        d.validate()?;
        Ok(d)
    }

    /// Axis-aligned box; infinite bounds are dropped from the constraint set.
    pub fn boxed(lo: &[f64], hi: &[f64], interior: &[f64]) -> Result<Self> {
        assert_eq!(lo.len(), hi.len());
        let k = lo.len();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for i in 0..k {
            if hi[i].is_finite() {
                let mut col = DVector::zeros(k);
                col[i] = 1.0;
                cols.push(col);
                rhs.push(hi[i]);
            }
            if lo[i].is_finite() {
                let mut col = DVector::zeros(k);
                col[i] = -1.0;
                cols.push(col);
                rhs.push(-lo[i]);
            }
        }
        let s_mat = DMatrix::from_columns(&cols.to_vec());
        Self::new(s_mat, DVector::from_vec(rhs), DVector::from_column_slice(interior))
    }

    pub fn k_theta(&self) -> usize {
        self.bound_mat.nrows()
    }

    pub fn k_s(&self) -> usize {
        self.bound_mat.ncols()
    }

    /// s - S' theta
    pub fn slack(&self, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        &self.bound_vec - self.bound_mat.transpose() * th
    }

    pub fn contains(&self, theta: &[f64], strict_margin: f64) -> bool {
        self.slack(theta).iter().all(|&v| v > strict_margin)
    }

    /// Index and value of the most violated constraint, if any.
    pub fn worst_violation(&self, theta: &[f64]) -> Option<(usize, f64)> {
        let sl = self.slack(theta);
        let mut worst: Option<(usize, f64)> = None;
        for (j, &v) in sl.iter().enumerate() {
            if v <= 0.0 && worst.is_none_or(|(_, w)| v < w) {
                worst = Some((j, v));
            }
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        if self.interior.len() != self.k_theta() {
            return Err(Error::InvalidInput("interior point has wrong dimension".into()));
        }
        if !self.contains(self.interior.as_slice(), 0.0) {
            return Err(Error::InvalidInput("interior point is not strictly feasible".into()));
        }
        Ok(())
    }

    /// Euclidean projection onto D by active-set enumeration (k_s is small).
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.contains(v.as_slice(), -0.0) {
            return v.clone();
        }
        let k_s = self.k_s();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0..(1usize << k_s) {
            let active: Vec<usize> = (0..k_s).filter(|j| mask & (1 << j) != 0).collect();
            if let Some(w) = self.project_with_active(v, &active) {
                if self.contains(w.as_slice(), -1e-12) || self.slack(w.as_slice()).iter().all(|&x| x >= -1e-10) {
                    let d = (&w - v).norm_squared();
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, w));
                    }
                }
            }
        }
        best.map(|(_, w)| w).unwrap_or_else(|| self.interior.clone())
    }

    fn project_with_active(&self, v: &DVector<f64>, active: &[usize]) -> Option<DVector<f64>> {
        if active.is_empty() {
            return Some(v.clone());
        }
        // Minimize |w - v|^2 with S_A' w = s_A: w = v - S_A (S_A' S_A)^{-1} (S_A' v - s_A)
        let k = self.k_theta();
        let na = active.len();
        if na > k {
            return None;
        }
        let mut sa = DMatrix::zeros(k, na);
        let mut rhs = DVector::zeros(na);
        for (j, &idx) in active.iter().enumerate() {
            sa.set_column(j, &self.bound_mat.column(idx));
            rhs[j] = self.bound_vec[idx];
        }
        let gram = sa.transpose() * &sa;
        let lu = gram.lu();
        let lambda = lu.solve(&(sa.transpose() * v - rhs))?;
        Some(v - sa * lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_domain_slack_and_projection() {
        let d = ShapeDomain::boxed(&[0.0, 0.0], &[2.0, f64::INFINITY], &[1.0, 1.0]).unwrap();
        assert!(d.contains(&[0.5, 10.0], 0.0));
        assert!(!d.contains(&[-0.1, 1.0], 0.0));
        let p = d.project(&DVector::from_vec(vec![-1.0, 3.0]));
        assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] - 3.0).abs() < 1e-12);
        let p2 = d.project(&DVector::from_vec(vec![3.0, -2.0]));
        assert!((p2[0] - 2.0).abs() < 1e-12 && (p2[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn interior_point_must_be_strict() {
        let r = ShapeDomain::boxed(&[0.0], &[1.0], &[0.0]);
        assert!(r.is_err());
    }
}
