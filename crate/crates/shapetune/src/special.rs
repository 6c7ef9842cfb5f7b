//! Normal-CDF helpers and exact integrals of `r^k exp(-(a2 r^2 + a1 r + a0))`.
//!
//! The moment integrals are the workhorse behind normalization constants,
//! their theta-derivatives, and piecewise CDF assembly: every PLQ penalty is
//! piecewise quadratic, so `exp(-rho)` integrates in closed form piece by
//! piece via `erfc` (Gaussian pieces) or plain exponentials (linear pieces).

use std::f64::consts::{PI, SQRT_2};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal pdf.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF, stable in both tails.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// erf(hi) - erf(lo) without cancellation when both ends share a sign.
#[inline]
pub fn erf_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(hi >= lo);
    if lo >= 0.0 {
        libm::erfc(lo) - libm::erfc(hi)
    } else if hi <= 0.0 {
        libm::erfc(-hi) - libm::erfc(-lo)
    } else {
        libm::erf(hi) - libm::erf(lo)
    }
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation polished by one Halley step through
/// `erfc`; relative error near machine precision over (0, 1).
pub fn inv_std_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_std_normal_cdf needs p in (0,1), got {p}");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley refinement.
    let e = std_normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    x
}

/// `int_{lo}^{hi} r^k exp(-(a2 r^2 + a1 r + a0)) dr` for k in {0, 1, 2}.
///
/// `lo`/`hi` may be infinite. Returns `f64::INFINITY` when the integral
/// diverges (e.g. a2 = 0 with the wrong slope sign on an unbounded piece).
pub fn exp_poly_moment(k: usize, a2: f64, a1: f64, a0: f64, lo: f64, hi: f64) -> f64 {
    assert!(k <= 2, "moments implemented for k <= 2");
    if hi <= lo {
        return 0.0;
    }
    if a2 > 0.0 {
        gaussian_moment(k, a2, a1, a0, lo, hi)
    } else if a2 == 0.0 && a1 != 0.0 {
        exponential_moment(k, a1, a0, lo, hi)
    } else if a2 == 0.0 {
        // Flat piece: only finite intervals integrate.
        if !lo.is_finite() || !hi.is_finite() {
            return f64::INFINITY;
        }
        let w = (-a0).exp();
        match k {
            0 => w * (hi - lo),
            1 => w * 0.5 * (hi * hi - lo * lo),
            _ => w * (hi * hi * hi - lo * lo * lo) / 3.0,
        }
    } else {
        f64::INFINITY // a2 < 0 never integrates on unbounded pieces; reject outright
    }
}

fn gaussian_moment(k: usize, a2: f64, a1: f64, a0: f64, lo: f64, hi: f64) -> f64 {
    let sq = a2.sqrt();
    let h = a1 / (2.0 * a2);
    let c = a0 - a1 * a1 / (4.0 * a2);
    let ec = (-c).exp();
    let s_lo = if lo.is_finite() { sq * (lo + h) } else { f64::NEG_INFINITY };
    let s_hi = if hi.is_finite() { sq * (hi + h) } else { f64::INFINITY };
    let e_lo = if s_lo.is_finite() { (-s_lo * s_lo).exp() } else { 0.0 };
    let e_hi = if s_hi.is_finite() { (-s_hi * s_hi).exp() } else { 0.0 };
    let ed = erf_diff(s_lo.max(-7.0e2), s_hi.min(7.0e2));

    // J_k = int s^k exp(-s^2) ds over [s_lo, s_hi]
    let j0 = 0.5 * PI.sqrt() * ed;
    match k {
        0 => ec * j0 / sq,
        1 => {
            let j1 = 0.5 * (e_lo - e_hi);
            ec * (j1 / a2 - h * j0 / sq)
        }
        _ => {
            let j1 = 0.5 * (e_lo - e_hi);
            let t_lo = if s_lo.is_finite() { s_lo * e_lo } else { 0.0 };
            let t_hi = if s_hi.is_finite() { s_hi * e_hi } else { 0.0 };
            let j2 = 0.5 * (t_lo - t_hi) + 0.5 * j0;
            ec * (j2 / (a2 * sq) - 2.0 * h * j1 / a2 + h * h * j0 / sq)
        }
    }
}

fn exponential_moment(k: usize, a1: f64, a0: f64, lo: f64, hi: f64) -> f64 {
    // Antiderivatives of r^k exp(-(a1 r + a0)).
    let anti = |r: f64, k: usize| -> f64 {
        if !r.is_finite() {
            // Decaying end contributes 0; growing end diverges.
            let decaying = (r > 0.0) == (a1 > 0.0);
            return if decaying { 0.0 } else { f64::NAN };
        }
        let a = (-(a1 * r + a0)).exp();
        match k {
            0 => -a / a1,
            1 => -(r / a1 + 1.0 / (a1 * a1)) * a,
            _ => -(r * r / a1 + 2.0 * r / (a1 * a1) + 2.0 / (a1 * a1 * a1)) * a,
        }
    };
    let f_hi = anti(hi, k);
    let f_lo = anti(lo, k);
    if f_hi.is_nan() || f_lo.is_nan() {
        return f64::INFINITY;
    }
    f_hi - f_lo
}
