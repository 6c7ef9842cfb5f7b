//! Self-tuning robust losses.
//!
//! Joint maximum-likelihood inference of regression parameters `x` and penalty
//! shape parameters `theta`. Interpreting a penalty `rho(r; theta)` as the
//! negative log of a residual density brings the log normalization constant
//! `log nc(theta)` into the objective, which lets the data choose the penalty
//! shape (quantile slope, Huber threshold, scale) while the model is fit.
//!
//! The crate provides:
//!
//! * a catalog of piecewise linear-quadratic (PLQ) and smooth penalties with
//!   conjugate representations ([`penalty`]),
//! * exact and quadrature-backed evaluation of `log nc` and its derivatives
//!   ([`normalization`]),
//! * a PALM solver for smooth penalties ([`palm`]),
//! * a primal-dual interior-point solver for nonsmooth PLQ penalties ([`ip`]),
//! * exact inverse-CDF sampling from penalty-induced densities ([`sampling`]),
//! * self-tuning factorized robust PCA ([`rpca`]),
//! * experiment drivers reproducing the synthetic studies ([`experiments`]).
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod error;
pub mod experiments;
pub mod io;
pub mod ip;
pub mod linalg;
pub mod normalization;
pub mod palm;
pub mod penalty;
pub mod quadrature;
pub mod rng;
pub mod rpca;
pub mod sampling;
pub mod special;
pub mod svgplot;

pub use error::{Error, Result};
pub use normalization::{NcMode, NormalizationModel};
pub use penalty::{Penalty, PlqAtom, ShapeDomain};
