//! Exact sampling from penalty-induced residual densities and synthetic
//! regression instances.
//!
//! The density `exp(-rho(r; theta)) / nc(theta)` is piecewise analytic: the
//! CDF is assembled from closed-form piece integrals (exponentials on linear
//! pieces, normal CDFs on quadratic pieces) and a panel table on non-PLQ
//! cores refined with Newton to ~1e-12. Uniform draws come from the
//! counter-based generator, so instances are reproducible bit for bit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normalization::quadrature_nc;
use crate::penalty::{Penalty, PieceForm};
use crate::quadrature::adaptive_gk;
use crate::rng::CounterRng;
use crate::special::{exp_poly_moment, inv_std_normal_cdf, std_normal_cdf};

const TABLE_NODES: usize = 512;

enum CdfPieceKind {
    /// rho = a1 r + a0 (a1 != 0): exponential inversion in closed form.
    Exponential { a1: f64, a0: f64 },
    /// rho = a2 r^2 + a1 r + a0 (a2 > 0): inversion through the normal CDF.
    Gaussian { mean: f64, sd: f64, scale: f64 },
    /// rho = a0: uniform on the piece.
    Flat { a0: f64 },
    /// Monotone cumulative table with Newton refinement.
    Table { nodes: Vec<(f64, f64)> },
}

struct CdfPiece {
    lo: f64,
    hi: f64,
    mass: f64,
    kind: CdfPieceKind,
}

/// Piecewise CDF of the density exp(-rho)/nc for a fixed theta.
pub struct PiecewiseCdf {
    penalty: Penalty,
    theta: Vec<f64>,
    pieces: Vec<CdfPiece>,
    nc: f64,
}

impl PiecewiseCdf {
    pub fn build(penalty: Penalty, theta: &[f64]) -> Result<Self> {
        penalty.validate_theta(theta)?;
        let (nc, _) = quadrature_nc(penalty, theta, 1e-12, 10_000)?;
        let mut pieces = Vec::new();
        for piece in penalty.density_pieces(theta) {
            let cp = match piece.form {
                PieceForm::Quad { a2, a1, a0 } => {
                    let mass = exp_poly_moment(0, a2, a1, a0, piece.lo, piece.hi);
                    if !mass.is_finite() {
                        return Err(Error::Divergent {
                            detail: format!("{} not integrable at {:?}", penalty.key(), theta),
                        });
                    }
                    let kind = if a2 > 0.0 {
                        let sd = (0.5 / a2).sqrt();
                        let mean = -a1 / (2.0 * a2);
                        let c = a0 - a1 * a1 / (4.0 * a2);
                        CdfPieceKind::Gaussian { mean, sd, scale: (-c).exp() }
                    } else if a1 != 0.0 {
                        CdfPieceKind::Exponential { a1, a0 }
                    } else {
                        CdfPieceKind::Flat { a0 }
                    };
                    CdfPiece { lo: piece.lo, hi: piece.hi, mass, kind }
                }
                PieceForm::General => {
                    if !piece.lo.is_finite() || !piece.hi.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "sampling for {} requires bounded non-PLQ pieces",
                            penalty.key()
                        )));
                    }
                    let f = |r: f64| (-penalty.eval_raw(r, theta)).exp();
                    let mut nodes = Vec::with_capacity(TABLE_NODES + 1);
                    let mut cum = 0.0;
                    nodes.push((piece.lo, 0.0));
                    let step = (piece.hi - piece.lo) / TABLE_NODES as f64;
                    for i in 0..TABLE_NODES {
                        let a = piece.lo + i as f64 * step;
                        let b = a + step;
                        let q = adaptive_gk(&f, a, b, 1e-14, 1e-12, 2_000)?;
                        cum += q.value;
                        nodes.push((b, cum));
                    }
                    CdfPiece { lo: piece.lo, hi: piece.hi, mass: cum, kind: CdfPieceKind::Table { nodes } }
                }
            };
            pieces.push(cp);
        }
        Ok(PiecewiseCdf { penalty, theta: theta.to_vec(), pieces, nc })
    }

    pub fn nc(&self) -> f64 {
        self.nc
    }

    /// P(R <= r).
    pub fn cdf(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.pieces {
            if r >= p.hi {
                acc += p.mass;
            } else if r > p.lo {
                acc += self.piece_mass_to(p, r);
                break;
            } else {
                break;
            }
        }
        (acc / self.nc).clamp(0.0, 1.0)
    }

    fn piece_mass_to(&self, p: &CdfPiece, r: f64) -> f64 {
        match &p.kind {
            CdfPieceKind::Exponential { a1, a0 } => exp_poly_moment(0, 0.0, *a1, *a0, p.lo, r),
            CdfPieceKind::Gaussian { mean, sd, scale } => {
                let z = (r - mean) / sd;
                let lo_cdf = if p.lo.is_finite() { std_normal_cdf((p.lo - mean) / sd) } else { 0.0 };
                scale * sd * crate::special::SQRT_2PI * (std_normal_cdf(z) - lo_cdf)
            }
            CdfPieceKind::Flat { a0 } => (-a0).exp() * (r - p.lo),
            CdfPieceKind::Table { nodes } => {
                let idx = nodes.partition_point(|(x, _)| *x <= r).saturating_sub(1);
                let (x0, c0) = nodes[idx.min(nodes.len() - 1)];
                let f = |t: f64| (-self.penalty.eval_raw(t, &self.theta)).exp();
                let q = adaptive_gk(&f, x0, r, 1e-14, 1e-12, 500).map(|q| q.value).unwrap_or(0.0);
                c0 + q
            }
        }
    }

    /// Inverse CDF at u in (0, 1).
    pub fn invert(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        let mut target = u * self.nc;
        let last = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            if target > p.mass && i < last {
                target -= p.mass;
                continue;
            }
            let t = target.min(p.mass);
            return match &p.kind {
                CdfPieceKind::Exponential { a1, a0 } => {
                    if p.lo.is_finite() {
                        let a_lo = (-(a1 * p.lo + a0)).exp();
                        let a_r = a_lo - a1 * t;
                        if a_r <= 0.0 {
                            p.hi
                        } else {
                            -(a_r.ln() + a0) / a1
                        }
                    } else {
                        // Left tail: mass(r) = exp(-(a1 r + a0)) / (-a1), a1 < 0.
                        let a_r = -a1 * t;
                        -(a_r.ln() + a0) / a1
                    }
                }
                CdfPieceKind::Gaussian { mean, sd, scale } => {
                    let lo_cdf = if p.lo.is_finite() { std_normal_cdf((p.lo - mean) / sd) } else { 0.0 };
                    let pr = lo_cdf + t / (scale * sd * crate::special::SQRT_2PI);
                    let pr = pr.clamp(1e-300, 1.0 - 1e-16);
                    mean + sd * inv_std_normal_cdf(pr)
                }
                CdfPieceKind::Flat { a0 } => p.lo + t * a0.exp(),
                CdfPieceKind::Table { nodes } => {
                    let idx = nodes.partition_point(|(_, c)| *c < t).clamp(1, nodes.len() - 1);
                    let (x0, c0) = nodes[idx - 1];
                    let (x1, c1) = nodes[idx];
                    // Seed by interpolation, refine with safeguarded Newton on
                    // m(r) = c0 + int_{x0}^r f - t; m' = f > 0 so it is monotone.
                    let f = |r: f64| (-self.penalty.eval_raw(r, &self.theta)).exp();
                    let mut lo = x0;
                    let mut hi = x1;
                    let mut x = if c1 > c0 { x0 + (x1 - x0) * (t - c0) / (c1 - c0) } else { 0.5 * (x0 + x1) };
                    for _ in 0..60 {
                        let m = adaptive_gk(&f, x0, x, 1e-15, 1e-13, 200).map(|q| q.value).unwrap_or(0.0)
                            + c0
                            - t;
                        if m.abs() <= 1e-13 * self.nc {
                            break;
                        }
                        if m > 0.0 {
                            hi = x;
                        } else {
                            lo = x;
                        }
                        let step = m / f(x).max(1e-300);
                        let mut xn = x - step;
                        if !(xn > lo && xn < hi) {
                            xn = 0.5 * (lo + hi);
                        }
                        if (xn - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                            x = xn;
                            break;
                        }
                        x = xn;
                    }
                    x
                }
            };
        }
        unreachable!("target mass exceeds total");
    }
}

/// Draw m i.i.d. residuals from exp(-rho(.; theta))/nc by inverse-CDF.
pub fn sample_residuals(penalty: Penalty, theta: &[f64], m: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let cdf = PiecewiseCdf::build(penalty, theta)?;
    let mut rng = CounterRng::new(seed, stream);
    Ok((0..m).map(|_| cdf.invert(rng.uniform())).collect())
}

/// Protocol for a synthetic regression instance.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub penalty: Penalty,
    pub theta_true: Vec<f64>,
    pub seed: u64,
    /// None: x_true drawn standard normal; Some: supplied.
    pub x_true: Option<DVector<f64>>,
}

pub struct Regression {
    pub a: DMatrix<f64>,
    pub x_true: DVector<f64>,
    pub y: DVector<f64>,
}

/// A iid standard normal, y = A x_true + residuals drawn exactly from the
/// penalty-induced density. Deterministic in the seed: the design matrix,
/// x_true and residuals use disjoint counter streams.
pub fn generate_regression(spec: &SyntheticSpec) -> Result<Regression> {
    if !(spec.m > spec.n && spec.n >= 1) {
        return Err(Error::InvalidInput(format!("need m > n >= 1, got m={} n={}", spec.m, spec.n)));
    }
    spec.penalty.validate_theta(&spec.theta_true)?;
    let mut rng_a = CounterRng::new(spec.seed, 1);
    let a = DMatrix::from_fn(spec.m, spec.n, |_, _| rng_a.standard_normal());
    let x_true = match &spec.x_true {
        Some(x) => {
            if x.len() != spec.n {
                return Err(Error::InvalidInput("supplied x_true has wrong length".into()));
            }
            x.clone()
        }
        None => {
            let mut rng_x = CounterRng::new(spec.seed, 2);
            DVector::from_fn(spec.n, |_, _| rng_x.standard_normal())
        }
    };
    let eps = sample_residuals(spec.penalty, &spec.theta_true, spec.m, spec.seed, 3)?;
    let y = &a * &x_true + DVector::from_vec(eps);
    Ok(Regression { a, x_true, y })
}

/// Two-sided Kolmogorov-Smirnov statistic of sorted samples against a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_samples(p: Penalty, theta: &[f64], m: usize, seed: u64) -> Vec<f64> {
        let mut s = sample_residuals(p, theta, m, seed, 3).unwrap();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }

    #[test]
    fn symmetric_quantile_is_laplace_with_zero_median() {
        let m = 100_000;
        let s = sorted_samples(Penalty::Quantile, &[0.5], m, 42);
        let median = s[m / 2];
        // q_0.5 has slope 1/2 per side: Laplace with scale 2, IQR 4 ln 2
        // (consistent with nc(0.5) = 4).
        let iqr = s[3 * m / 4] - s[m / 4];
        assert!((iqr - 4.0 * 2.0f64.ln()).abs() < 0.05, "iqr {iqr}");
        assert!(median.abs() <= 3.0 * iqr / (m as f64).sqrt(), "median {median}");
    }

    #[test]
    fn quantile_left_mass_matches_piecewise_integral() {
        // For q_tau the negative-residual mass is (1/tau)/nc = 1 - tau.
        let m = 200_000;
        for &tau in &[0.9, 0.3] {
            let s = sorted_samples(Penalty::Quantile, &[tau], m, 7);
            let frac_neg = s.iter().filter(|&&x| x < 0.0).count() as f64 / m as f64;
            assert!(
                (frac_neg - (1.0 - tau)).abs() < 0.005,
                "tau={tau}: negative fraction {frac_neg}"
            );
        }
    }

    #[test]
    fn ks_distance_quantile_huber_against_analytic_cdf() {
        let theta = [1.0, 1.0];
        let m = 1_000_000;
        let s = sorted_samples(Penalty::QuantileHuber, &theta, m, 2024);
        let cdf = PiecewiseCdf::build(Penalty::QuantileHuber, &theta).unwrap();
        let d = ks_statistic(&s, |x| cdf.cdf(x));
        // 1% KS critical value 1.63/sqrt(m).
        assert!(d <= 1.63 / (m as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn ks_distance_huberized_t_table_inversion() {
        let theta = [2.0, 0.5];
        let m = 100_000;
        let s = sorted_samples(Penalty::HuberizedT, &theta, m, 5);
        let cdf = PiecewiseCdf::build(Penalty::HuberizedT, &theta).unwrap();
        let d = ks_statistic(&s, |x| cdf.cdf(x));
        assert!(d <= 0.006, "KS {d}");
    }

    #[test]
    fn cdf_and_inverse_round_trip() {
        for (p, theta) in [
            (Penalty::Quantile, vec![0.2]),
            (Penalty::QuantileHuber, vec![0.6, 1.2]),
            (Penalty::L2, vec![]),
            (Penalty::HuberScaled, vec![1.5, 0.7]),
            (Penalty::HuberizedT, vec![1.0, 0.3]),
            (Penalty::Vapnik, vec![0.8]),
        ] {
            let cdf = PiecewiseCdf::build(p, &theta).unwrap();
            for &u in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
                let x = cdf.invert(u);
                let back = cdf.cdf(x);
                assert!((back - u).abs() < 1e-9, "{}: u={u} -> x={x} -> {back}", p.key());
            }
        }
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let spec = SyntheticSpec {
            m: 40,
            n: 3,
            penalty: Penalty::Quantile,
            theta_true: vec![0.3],
            seed: 99,
            x_true: None,
        };
        let g1 = generate_regression(&spec).unwrap();
        let g2 = generate_regression(&spec).unwrap();
        assert_eq!(g1.a.as_slice(), g2.a.as_slice());
        assert_eq!(g1.y.as_slice(), g2.y.as_slice());
        assert_eq!(g1.x_true.as_slice(), g2.x_true.as_slice());
    }

    #[test]
    fn noiseless_limit_recovers_x_by_least_squares() {
        // Tiny-scale noise: residuals O(kappa*sigma) = O(1e-8).
        let spec = SyntheticSpec {
            m: 80,
            n: 5,
            penalty: Penalty::HuberScaled,
            theta_true: vec![1.0, 1e-8],
            seed: 11,
            x_true: None,
        };
        let g = generate_regression(&spec).unwrap();
        let ata = g.a.transpose() * &g.a;
        let aty = g.a.transpose() * &g.y;
        let x_ls = ata.cholesky().unwrap().solve(&aty);
        assert!((&x_ls - &g.x_true).norm() / g.x_true.norm() < 1e-6);
    }

    #[test]
    fn rejects_non_integrable_theta() {
        assert!(sample_residuals(Penalty::Hinge, &[1.0], 10, 0, 0).is_err());
        let spec = SyntheticSpec {
            m: 10,
            n: 2,
            penalty: Penalty::Quantile,
            theta_true: vec![1.0],
            seed: 0,
            x_true: None,
        };
        assert!(generate_regression(&spec).is_err());
    }
}
