//! Normalization constants: closed forms against adaptive quadrature, the
//! barrier behavior of the quantile's log nc, and derivative checks.

use shapetune::normalization::{quadrature_nc, NcMode, NormalizationModel};
use shapetune::Penalty;

fn main() {
    println!("closed form vs quadrature:");
    for (p, theta) in [
        (Penalty::Quantile, vec![0.3]),
        (Penalty::QuantileHuber, vec![1.0, 1.0]),
        (Penalty::HuberScaled, vec![1.5, 0.7]),
    ] {
        let closed = NormalizationModel::new(p, NcMode::ClosedForm).unwrap();
        let (nc_closed, _) = closed.nc(&theta).unwrap();
        let (nc_quad, err) = quadrature_nc(p, &theta, 1e-12, 10_000).unwrap();
        println!(
            "  {:<16} theta {:?}: closed {nc_closed:.12}, quadrature {nc_quad:.12} (est err {err:.1e})",
            p.key(),
            theta
        );
    }

    println!("\nquantile log nc acts as a barrier for tau in (0, 1):");
    let m = NormalizationModel::new(Penalty::Quantile, NcMode::Auto).unwrap();
    for tau in [0.5, 0.1, 0.01, 0.001] {
        println!("  tau = {tau:>6}: log nc = {:.6}", m.log_nc(&[tau]).unwrap());
    }

    println!("\ngradient and Hessian of log nc (quantile Huber, theta = (1, 1)):");
    let m = NormalizationModel::new(Penalty::QuantileHuber, NcMode::Auto).unwrap();
    let g = m.grad_log_nc(&[1.0, 1.0]).unwrap();
    let h = m.hess_log_nc(&[1.0, 1.0]).unwrap();
    println!("  grad = [{:.8}, {:.8}] (symmetric by construction)", g[0], g[1]);
    println!("  hess = [[{:.6}, {:.6}], [{:.6}, {:.6}]]", h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);

    println!("\nquadrature-only families:");
    let (v, e) = quadrature_nc(Penalty::HuberizedT, &[8.0, 0.1], 1e-12, 10_000).unwrap();
    println!("  huberized_t (8, 0.1): nc = {v:.12} (err {e:.1e})");
}
