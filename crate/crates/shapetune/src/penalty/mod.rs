//! Penalty catalog: primal evaluations, derivatives in the residual and in
//! the shape parameters, piecewise density descriptions, and conjugate PLQ
//! atoms with affine theta-dependence.
//!
//! Shape parametrizations follow the affine-conjugate convention: the
//! quantile Huber uses `theta = (theta1, theta2) = (tau*kappa, (1-tau)*kappa)`
//! so the conjugate interval is `[-theta1, theta2]` and both the offset and
//! constraint bound stay affine in theta. `(tau, kappa)` are recovered by
//! `tau = theta1/(theta1+theta2)`, `kappa = theta1+theta2`.

mod atom;
mod conjugate;

pub use atom::{stacked_min_singular_value, PlqAtom, ShapeDomain};
pub use conjugate::eval_conjugate_sup;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One analytic piece of a penalty, used for exact integration of
/// `exp(-rho)` and for CDF assembly.
#[derive(Clone, Copy, Debug)]
pub enum PieceForm {
    /// rho(r) = a2 r^2 + a1 r + a0 on the piece.
    Quad { a2: f64, a1: f64, a0: f64 },
    /// No closed-form integral on the piece; integrate numerically.
    General,
}

#[derive(Clone, Copy, Debug)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub form: PieceForm,
}

/// The penalty catalog. Elementwise scalar penalties; solvers replicate them
/// across residuals implicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// rho(r) = r^2/2 (no shape parameters).
    L2,
    /// Asymmetric 1-norm q_tau: slope tau on the left, 1-tau on the right.
    Quantile,
    /// max(0, r - eps). Primal/conjugate only: exp(-rho) is not integrable.
    Hinge,
    /// Huber with threshold kappa.
    Huber,
    /// Quantile Huber in (theta1, theta2) = (tau*kappa, (1-tau)*kappa).
    QuantileHuber,
    /// max(0, |r| - eps).
    Vapnik,
    /// Huberized deadzone: quadratic ramp outside [-eps, eps].
    SmoothInsensitive,
    /// r^2/2 + alpha |r|.
    ElasticNet,
    /// Huber with threshold kappa and scale sigma: quadratic on |r| <= kappa*sigma.
    HuberScaled,
    /// log(1 + r^2/sigma^2) core with linear tails beyond |r| = kappa*sigma.
    HuberizedT,
    /// sqrt(r^2 + eps^2)/eps - 1, smooth everywhere.
    Hybrid,
    /// log(1 + exp(a r)). Primal only: not integrable (flat left tail).
    Logistic,
}

pub const ALL_PENALTIES: [Penalty; 12] = [
    Penalty::L2,
    Penalty::Quantile,
    Penalty::Hinge,
    Penalty::Huber,
    Penalty::QuantileHuber,
    Penalty::Vapnik,
    Penalty::SmoothInsensitive,
    Penalty::ElasticNet,
    Penalty::HuberScaled,
    Penalty::HuberizedT,
    Penalty::Hybrid,
    Penalty::Logistic,
];

/// The full catalog, with the two scaled families last.
pub fn catalog() -> Vec<Penalty> {
    ALL_PENALTIES.to_vec()
}

impl Penalty {
    pub fn key(&self) -> &'static str {
        match self {
            Penalty::L2 => "l2",
            Penalty::Quantile => "quantile",
            Penalty::Hinge => "hinge",
            Penalty::Huber => "huber",
            Penalty::QuantileHuber => "quantile_huber",
            Penalty::Vapnik => "vapnik",
            Penalty::SmoothInsensitive => "smooth_insensitive",
            Penalty::ElasticNet => "elastic_net",
            Penalty::HuberScaled => "huber_scaled",
            Penalty::HuberizedT => "huberized_t",
            Penalty::Hybrid => "hybrid",
            Penalty::Logistic => "logistic",
        }
    }

    pub fn from_key(key: &str) -> Option<Penalty> {
        ALL_PENALTIES.iter().copied().find(|p| p.key() == key)
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            Penalty::L2 => 0,
            Penalty::Quantile
            | Penalty::Hinge
            | Penalty::Huber
            | Penalty::Vapnik
            | Penalty::SmoothInsensitive
            | Penalty::ElasticNet
            | Penalty::Hybrid
            | Penalty::Logistic => 1,
            Penalty::QuantileHuber | Penalty::HuberScaled | Penalty::HuberizedT => 2,
        }
    }

    pub fn theta_names(&self) -> &'static [&'static str] {
        match self {
            Penalty::L2 => &[],
            Penalty::Quantile => &["tau"],
            Penalty::Hinge | Penalty::Vapnik | Penalty::SmoothInsensitive | Penalty::Hybrid => {
                &["epsilon"]
            }
            Penalty::Huber => &["kappa"],
            Penalty::QuantileHuber => &["theta1", "theta2"],
            Penalty::ElasticNet => &["alpha"],
            Penalty::HuberScaled | Penalty::HuberizedT => &["kappa", "sigma"],
            Penalty::Logistic => &["a"],
        }
    }

    /// True when rho is C^1 in r everywhere (one-sided derivatives agree at
    /// breakpoints), so the PALM gradients exist.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            Penalty::L2
                | Penalty::Huber
                | Penalty::QuantileHuber
                | Penalty::SmoothInsensitive
                | Penalty::HuberScaled
                | Penalty::HuberizedT
                | Penalty::Hybrid
                | Penalty::Logistic
        )
    }

    /// Default shape domain with a strict interior point.
    pub fn shape_domain(&self) -> ShapeDomain {
        match self {
            Penalty::L2 => ShapeDomain {
                bound_mat: DMatrix::zeros(0, 0),
                bound_vec: DVector::zeros(0),
                interior: DVector::zeros(0),
            },
            Penalty::Quantile => {
                ShapeDomain::boxed(&[0.0], &[1.0], &[0.5]).expect("quantile domain")
            }
            Penalty::Hinge | Penalty::Vapnik | Penalty::SmoothInsensitive | Penalty::Hybrid => {
                ShapeDomain::boxed(&[0.0], &[f64::INFINITY], &[1.0]).expect("eps domain")
            }
            Penalty::Huber | Penalty::ElasticNet | Penalty::Logistic => {
                ShapeDomain::boxed(&[0.0], &[f64::INFINITY], &[1.0]).expect("scalar domain")
            }
            Penalty::QuantileHuber | Penalty::HuberScaled | Penalty::HuberizedT => {
                ShapeDomain::boxed(
                    &[0.0, 0.0],
                    &[f64::INFINITY, f64::INFINITY],
                    &[1.0, 1.0],
                )
                .expect("positive orthant domain")
            }
        }
    }

    /// Rejects theta outside the (open) shape domain, naming the violated
    /// constraint.
    pub fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dim() {
            return Err(Error::DomainViolation {
                penalty: self.key(),
                detail: format!("expected {} parameters, got {}", self.theta_dim(), theta.len()),
            });
        }
        let dom = self.shape_domain();
        if let Some((j, v)) = dom.worst_violation(theta) {
            let col = dom.bound_mat.column(j);
            return Err(Error::DomainViolation {
                penalty: self.key(),
                detail: format!(
                    "constraint {} (S'theta <= s row with normal {:?}, bound {}) violated by {:.3e} at theta {:?}",
                    j,
                    col.as_slice(),
                    dom.bound_vec[j],
                    -v,
                    theta
                ),
            });
        }
        // Interior is required: boundary values make nc or gradients blow up.
        if !dom.contains(theta, 0.0) {
            return Err(Error::DomainViolation {
                penalty: self.key(),
                detail: format!("theta {:?} lies on the domain boundary", theta),
            });
        }
        Ok(())
    }

    /// rho(r; theta) without domain validation (callers validate once).
    pub fn eval_raw(&self, r: f64, theta: &[f64]) -> f64 {
        match self {
            Penalty::L2 => 0.5 * r * r,
            Penalty::Quantile => {
                let tau = theta[0];
                if r < 0.0 {
                    -tau * r
                } else {
                    (1.0 - tau) * r
                }
            }
            Penalty::Hinge => (r - theta[0]).max(0.0),
            Penalty::Huber => {
                let k = theta[0];
                if r.abs() <= k {
                    0.5 * r * r
                } else {
                    k * r.abs() - 0.5 * k * k
                }
            }
            Penalty::QuantileHuber => {
                let (t1, t2) = (theta[0], theta[1]);
                if r < -t1 {
                    -t1 * r - 0.5 * t1 * t1
                } else if r <= t2 {
                    0.5 * r * r
                } else {
                    t2 * r - 0.5 * t2 * t2
                }
            }
            Penalty::Vapnik => (r.abs() - theta[0]).max(0.0),
            Penalty::SmoothInsensitive => {
                let t = r.abs() - theta[0];
                if t <= 0.0 {
                    0.0
                } else if t <= 1.0 {
                    0.5 * t * t
                } else {
                    t - 0.5
                }
            }
            Penalty::ElasticNet => 0.5 * r * r + theta[0] * r.abs(),
            Penalty::HuberScaled => {
                let (k, s) = (theta[0], theta[1]);
                if r.abs() <= k * s {
                    0.5 * r * r / (s * s)
                } else {
                    k * r.abs() / s - 0.5 * k * k
                }
            }
            Penalty::HuberizedT => {
                let (k, s) = (theta[0], theta[1]);
                if r.abs() <= k * s {
                    (1.0 + r * r / (s * s)).ln()
                } else {
                    let a = 2.0 * k / (s * (1.0 + k * k));
                    a * (r.abs() - k * s) + (1.0 + k * k).ln()
                }
            }
            Penalty::Hybrid => {
                let e = theta[0];
                ((r * r + e * e).sqrt()) / e - 1.0
            }
            Penalty::Logistic => {
                let z = theta[0] * r;
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// d rho / d r; ties at breakpoints resolve to the quadratic/core branch.
    /// A.e. defined even for nonsmooth entries (used internally).
    pub fn dr_raw(&self, r: f64, theta: &[f64]) -> f64 {
        match self {
            Penalty::L2 => r,
            Penalty::Quantile => {
                let tau = theta[0];
                if r < 0.0 {
                    -tau
                } else {
                    1.0 - tau
                }
            }
            Penalty::Hinge => {
                if r > theta[0] {
                    1.0
                } else {
                    0.0
                }
            }
            Penalty::Huber => r.clamp(-theta[0], theta[0]),
            Penalty::QuantileHuber => r.clamp(-theta[0], theta[1]),
            Penalty::Vapnik => {
                if r.abs() > theta[0] {
                    r.signum()
                } else {
                    0.0
                }
            }
            Penalty::SmoothInsensitive => {
                let t = r.abs() - theta[0];
                r.signum() * t.clamp(0.0, 1.0)
            }
            Penalty::ElasticNet => r + theta[0] * r.signum(),
            Penalty::HuberScaled => {
                let (k, s) = (theta[0], theta[1]);
                (r / (s * s)).clamp(-k / s, k / s)
            }
            Penalty::HuberizedT => {
                let (k, s) = (theta[0], theta[1]);
                if r.abs() <= k * s {
                    2.0 * r / (s * s + r * r)
                } else {
                    r.signum() * 2.0 * k / (s * (1.0 + k * k))
                }
            }
            Penalty::Hybrid => {
                let e = theta[0];
                r / (e * (r * r + e * e).sqrt())
            }
            Penalty::Logistic => {
                let a = theta[0];
                a * sigmoid(a * r)
            }
        }
    }

    /// grad_theta rho into `out` (length theta_dim). A.e. defined.
    pub fn dtheta_into(&self, r: f64, theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.theta_dim());
        match self {
            Penalty::L2 => {}
            Penalty::Quantile => out[0] = -r,
            Penalty::Hinge => out[0] = if r > theta[0] { -1.0 } else { 0.0 },
            Penalty::Huber => {
                let k = theta[0];
                out[0] = if r.abs() > k { r.abs() - k } else { 0.0 };
            }
            Penalty::QuantileHuber => {
                let (t1, t2) = (theta[0], theta[1]);
                out[0] = 0.0;
                out[1] = 0.0;
                if r < -t1 {
                    out[0] = -r - t1;
                } else if r > t2 {
                    out[1] = r - t2;
                }
            }
            Penalty::Vapnik => out[0] = if r.abs() > theta[0] { -1.0 } else { 0.0 },
            Penalty::SmoothInsensitive => {
                let t = r.abs() - theta[0];
                out[0] = -t.clamp(0.0, 1.0);
            }
            Penalty::ElasticNet => out[0] = r.abs(),
            Penalty::HuberScaled => {
                let (k, s) = (theta[0], theta[1]);
                if r.abs() <= k * s {
                    out[0] = 0.0;
                    out[1] = -r * r / (s * s * s);
                } else {
                    out[0] = r.abs() / s - k;
                    out[1] = -k * r.abs() / (s * s);
                }
            }
            Penalty::HuberizedT => {
                let (k, s) = (theta[0], theta[1]);
                if r.abs() <= k * s {
                    out[0] = 0.0;
                    out[1] = -2.0 * r * r / (s * (s * s + r * r));
                } else {
                    let t = r.abs() - k * s;
                    let opk2 = 1.0 + k * k;
                    out[0] = 2.0 * (1.0 - k * k) * t / (s * opk2 * opk2);
                    // d/dsigma of the tail collapses to -a |r| / sigma.
                    out[1] = -2.0 * k * r.abs() / (s * s * opk2);
                }
            }
            Penalty::Hybrid => {
                let e = theta[0];
                out[0] = -r * r / (e * e * (r * r + e * e).sqrt());
            }
            Penalty::Logistic => {
                let a = theta[0];
                out[0] = r * sigmoid(a * r);
            }
        }
    }

    /// hess_theta rho into `out` (row-major theta_dim x theta_dim). A.e. defined.
    pub fn d2theta_into(&self, r: f64, theta: &[f64], out: &mut [f64]) {
        let k = self.theta_dim();
        debug_assert_eq!(out.len(), k * k);
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Penalty::L2 | Penalty::Quantile | Penalty::Hinge | Penalty::Vapnik | Penalty::ElasticNet => {}
            Penalty::Huber => {
                if r.abs() > theta[0] {
                    out[0] = -1.0;
                }
            }
            Penalty::QuantileHuber => {
                let (t1, t2) = (theta[0], theta[1]);
                if r < -t1 {
                    out[0] = -1.0;
                } else if r > t2 {
                    out[3] = -1.0;
                }
            }
            Penalty::SmoothInsensitive => {
                let t = r.abs() - theta[0];
                if t > 0.0 && t < 1.0 {
                    out[0] = 1.0;
                }
            }
            Penalty::HuberScaled => {
                let (kp, s) = (theta[0], theta[1]);
                if r.abs() <= kp * s {
                    out[3] = 3.0 * r * r / (s * s * s * s);
                } else {
                    out[0] = -1.0;
                    out[1] = -r.abs() / (s * s);
                    out[2] = out[1];
                    out[3] = 2.0 * kp * r.abs() / (s * s * s);
                }
            }
            Penalty::HuberizedT => {
                let (kp, s) = (theta[0], theta[1]);
                if r.abs() <= kp * s {
                    let d = s * s + r * r;
                    out[3] = (2.0 * r * r - 2.0 * s * s) / (d * d) + 2.0 / (s * s);
                } else {
                    let t = r.abs() - kp * s;
                    let opk2 = 1.0 + kp * kp;
                    out[0] = 4.0 * kp * (kp * kp - 3.0) * t / (s * opk2 * opk2 * opk2)
                        - 2.0 * (1.0 - kp * kp) / (opk2 * opk2);
                    out[1] = -2.0 * (1.0 - kp * kp) * r.abs() / (s * s * opk2 * opk2);
                    out[2] = out[1];
                    out[3] = 4.0 * kp * r.abs() / (s * s * s * opk2);
                }
            }
            Penalty::Hybrid => {
                let e = theta[0];
                let root = (r * r + e * e).sqrt();
                out[0] = r * r * (2.0 * r * r + 3.0 * e * e) / (e * e * e * root * root * root);
            }
            Penalty::Logistic => {
                let a = theta[0];
                let sgm = sigmoid(a * r);
                out[0] = r * r * sgm * (1.0 - sgm);
            }
        }
    }

    /// Largest curvature of rho in r over its quadratic/core region;
    /// the Lipschitz constant of grad_r. None for nonsmooth entries.
    pub fn curvature_bound(&self, theta: &[f64]) -> Option<f64> {
        match self {
            Penalty::L2 | Penalty::Huber | Penalty::QuantileHuber | Penalty::SmoothInsensitive => {
                Some(1.0)
            }
            Penalty::HuberScaled => Some(1.0 / (theta[1] * theta[1])),
            Penalty::HuberizedT => Some(2.0 / (theta[1] * theta[1])),
            Penalty::Hybrid => Some(1.0 / (theta[0] * theta[0])),
            Penalty::Logistic => Some(0.25 * theta[0] * theta[0]),
            _ => None,
        }
    }

    /// Residual values where the piecewise definition changes, sorted.
    pub fn breakpoints(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Penalty::L2 | Penalty::Hybrid | Penalty::Logistic => vec![],
            Penalty::Quantile | Penalty::ElasticNet => vec![0.0],
            Penalty::Hinge => vec![theta[0]],
            Penalty::Huber => vec![-theta[0], theta[0]],
            Penalty::QuantileHuber => vec![-theta[0], theta[1]],
            Penalty::Vapnik => vec![-theta[0], theta[0]],
            Penalty::SmoothInsensitive => {
                let e = theta[0];
                vec![-e - 1.0, -e, e, e + 1.0]
            }
            Penalty::HuberScaled | Penalty::HuberizedT => {
                let b = theta[0] * theta[1];
                vec![-b, b]
            }
        }
    }

    /// Analytic pieces covering the whole line, in increasing order.
    pub fn density_pieces(&self, theta: &[f64]) -> Vec<DensityPiece> {
        use PieceForm::*;
        let inf = f64::INFINITY;
        match self {
            Penalty::L2 => vec![DensityPiece { lo: -inf, hi: inf, form: Quad { a2: 0.5, a1: 0.0, a0: 0.0 } }],
            Penalty::Quantile => {
                let tau = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: 0.0, form: Quad { a2: 0.0, a1: -tau, a0: 0.0 } },
                    DensityPiece { lo: 0.0, hi: inf, form: Quad { a2: 0.0, a1: 1.0 - tau, a0: 0.0 } },
                ]
            }
            Penalty::Hinge => {
                let e = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: e, form: Quad { a2: 0.0, a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: e, hi: inf, form: Quad { a2: 0.0, a1: 1.0, a0: -e } },
                ]
            }
            Penalty::Huber => {
                let k = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: -k, form: Quad { a2: 0.0, a1: -k, a0: -0.5 * k * k } },
                    DensityPiece { lo: -k, hi: k, form: Quad { a2: 0.5, a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: k, hi: inf, form: Quad { a2: 0.0, a1: k, a0: -0.5 * k * k } },
                ]
            }
            Penalty::QuantileHuber => {
                let (t1, t2) = (theta[0], theta[1]);
                vec![
                    DensityPiece { lo: -inf, hi: -t1, form: Quad { a2: 0.0, a1: -t1, a0: -0.5 * t1 * t1 } },
                    DensityPiece { lo: -t1, hi: t2, form: Quad { a2: 0.5, a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: t2, hi: inf, form: Quad { a2: 0.0, a1: t2, a0: -0.5 * t2 * t2 } },
                ]
            }
            Penalty::Vapnik => {
                let e = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: -e, form: Quad { a2: 0.0, a1: -1.0, a0: -e } },
                    DensityPiece { lo: -e, hi: e, form: Quad { a2: 0.0, a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: e, hi: inf, form: Quad { a2: 0.0, a1: 1.0, a0: -e } },
                ]
            }
            Penalty::SmoothInsensitive => {
                let e = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: -e - 1.0, form: Quad { a2: 0.0, a1: -1.0, a0: -e - 0.5 } },
                    DensityPiece { lo: -e - 1.0, hi: -e, form: Quad { a2: 0.5, a1: e, a0: 0.5 * e * e } },
                    DensityPiece { lo: -e, hi: e, form: Quad { a2: 0.0, a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: e, hi: e + 1.0, form: Quad { a2: 0.5, a1: -e, a0: 0.5 * e * e } },
                    DensityPiece { lo: e + 1.0, hi: inf, form: Quad { a2: 0.0, a1: 1.0, a0: -e - 0.5 } },
                ]
            }
            Penalty::ElasticNet => {
                let al = theta[0];
                vec![
                    DensityPiece { lo: -inf, hi: 0.0, form: Quad { a2: 0.5, a1: -al, a0: 0.0 } },
                    DensityPiece { lo: 0.0, hi: inf, form: Quad { a2: 0.5, a1: al, a0: 0.0 } },
                ]
            }
            Penalty::HuberScaled => {
                let (k, s) = (theta[0], theta[1]);
                let b = k * s;
                vec![
                    DensityPiece { lo: -inf, hi: -b, form: Quad { a2: 0.0, a1: -k / s, a0: -0.5 * k * k } },
                    DensityPiece { lo: -b, hi: b, form: Quad { a2: 0.5 / (s * s), a1: 0.0, a0: 0.0 } },
                    DensityPiece { lo: b, hi: inf, form: Quad { a2: 0.0, a1: k / s, a0: -0.5 * k * k } },
                ]
            }
            Penalty::HuberizedT => {
                let (k, s) = (theta[0], theta[1]);
                let b = k * s;
                let a = 2.0 * k / (s * (1.0 + k * k));
                let off = (1.0 + k * k).ln() - a * b;
                vec![
                    DensityPiece { lo: -inf, hi: -b, form: Quad { a2: 0.0, a1: -a, a0: off } },
                    DensityPiece { lo: -b, hi: b, form: PieceForm::General },
                    DensityPiece { lo: b, hi: inf, form: Quad { a2: 0.0, a1: a, a0: off } },
                ]
            }
            Penalty::Hybrid | Penalty::Logistic => {
                vec![DensityPiece { lo: -inf, hi: inf, form: PieceForm::General }]
            }
        }
    }

    /// rho(r; theta), validating theta against the shape domain.
    pub fn eval_primal(&self, r: f64, theta: &[f64]) -> Result<f64> {
        self.validate_theta(theta)?;
        Ok(self.eval_raw(r, theta))
    }

    /// d rho / d r for smooth catalog entries.
    pub fn grad_r(&self, r: f64, theta: &[f64]) -> Result<f64> {
        self.validate_theta(theta)?;
        if !self.is_smooth() {
            return Err(Error::GradientUnavailable { penalty: self.key() });
        }
        Ok(self.dr_raw(r, theta))
    }

    /// grad_theta rho for smooth catalog entries.
    pub fn grad_theta(&self, r: f64, theta: &[f64]) -> Result<Vec<f64>> {
        self.validate_theta(theta)?;
        if !self.is_smooth() {
            return Err(Error::GradientUnavailable { penalty: self.key() });
        }
        let mut out = vec![0.0; self.theta_dim()];
        self.dtheta_into(r, theta, &mut out);
        Ok(out)
    }

    /// The conjugate PLQ description, when one exists with affine
    /// theta-dependence (the scaled families have none).
    pub fn plq_atom(&self) -> Result<PlqAtom> {
        let atom = match self {
            Penalty::L2 => PlqAtom {
                residual_map: DMatrix::from_row_slice(1, 1, &[1.0]),
                offset: DVector::zeros(1),
                constraint_mat: DMatrix::zeros(1, 0),
                constraint_off: DVector::zeros(0),
                curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
                theta_to_offset: DMatrix::zeros(0, 1),
                theta_to_constraint: DMatrix::zeros(0, 0),
            },
            Penalty::Quantile => PlqAtom {
                residual_map: DMatrix::from_row_slice(1, 1, &[1.0]),
                offset: DVector::zeros(1),
                constraint_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                constraint_off: DVector::from_vec(vec![1.0, 0.0]),
                curvature: DMatrix::zeros(1, 1),
                theta_to_offset: DMatrix::zeros(1, 1),
                // c_bar = (1 - tau, tau): u ranges over [-tau, 1 - tau].
                theta_to_constraint: DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]),
            },
            Penalty::Hinge => PlqAtom {
                residual_map: DMatrix::from_row_slice(1, 1, &[1.0]),
                offset: DVector::zeros(1),
                constraint_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                constraint_off: DVector::from_vec(vec![1.0, 0.0]),
                curvature: DMatrix::zeros(1, 1),
                theta_to_offset: DMatrix::from_row_slice(1, 1, &[1.0]),
                theta_to_constraint: DMatrix::zeros(1, 2),
            },
            Penalty::Huber => PlqAtom {
                residual_map: DMatrix::from_row_slice(1, 1, &[1.0]),
                offset: DVector::zeros(1),
                constraint_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                constraint_off: DVector::from_vec(vec![0.0, 0.0]),
                curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
                theta_to_offset: DMatrix::zeros(1, 1),
                theta_to_constraint: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            },
            Penalty::QuantileHuber => PlqAtom {
                residual_map: DMatrix::from_row_slice(1, 1, &[1.0]),
                offset: DVector::zeros(1),
                constraint_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                constraint_off: DVector::from_vec(vec![0.0, 0.0]),
                curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
                theta_to_offset: DMatrix::zeros(2, 1),
                // c_bar = (theta2, theta1): u ranges over [-theta1, theta2].
                theta_to_constraint: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            },
            Penalty::Vapnik => PlqAtom {
                residual_map: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                offset: DVector::zeros(2),
                constraint_mat: DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
                constraint_off: DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]),
                curvature: DMatrix::zeros(2, 2),
                theta_to_offset: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                theta_to_constraint: DMatrix::zeros(1, 4),
            },
            Penalty::SmoothInsensitive => PlqAtom {
                residual_map: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                offset: DVector::zeros(2),
                constraint_mat: DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
                constraint_off: DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]),
                curvature: DMatrix::identity(2, 2),
                theta_to_offset: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                theta_to_constraint: DMatrix::zeros(1, 4),
            },
            Penalty::ElasticNet => PlqAtom {
                residual_map: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
                offset: DVector::zeros(2),
                // Only u1 is constrained: u1 in [-alpha, alpha], u2 free.
                constraint_mat: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]),
                constraint_off: DVector::from_vec(vec![0.0, 0.0]),
                curvature: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
                theta_to_offset: DMatrix::zeros(1, 2),
                theta_to_constraint: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            },
            Penalty::HuberScaled | Penalty::HuberizedT | Penalty::Hybrid | Penalty::Logistic => {
                return Err(Error::AtomUnavailable { penalty: self.key() });
            }
        };
        Ok(atom)
    }

    /// Recover (tau, kappa) from the quantile-Huber parametrization.
    pub fn quantile_huber_tau_kappa(theta: &[f64]) -> (f64, f64) {
        let kappa = theta[0] + theta[1];
        (theta[0] / kappa, kappa)
    }

    /// Map (tau, kappa) into the quantile-Huber parametrization.
    pub fn quantile_huber_theta(tau: f64, kappa: f64) -> [f64; 2] {
        [tau * kappa, (1.0 - tau) * kappa]
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
