//! Walk the penalty catalog: evaluate each entry, check the primal against
//! the conjugate-sup oracle where a PLQ atom exists, and show derivatives.

use shapetune::penalty::{catalog, eval_conjugate_sup};

fn main() {
    let r = 1.3;
    println!("{:<18} {:>6} {:>12} {:>12}  notes", "penalty", "k_th", "rho(1.3)", "conj sup");
    for p in catalog() {
        let theta: Vec<f64> = match p.key() {
            "quantile" => vec![0.3],
            "quantile_huber" => vec![0.5, 0.5],
            "huber_scaled" | "huberized_t" => vec![1.0, 0.5],
            _ => p.shape_domain().interior.as_slice().to_vec(),
        };
        let primal = p.eval_primal(r, &theta).unwrap();
        let conj = match p.plq_atom() {
            Ok(atom) => match eval_conjugate_sup(&atom, r, &theta) {
                Ok(v) => format!("{v:.8}"),
                Err(e) => format!("({e})"),
            },
            Err(_) => "-".to_string(),
        };
        let smooth = if p.is_smooth() { "smooth" } else { "nonsmooth in r" };
        println!("{:<18} {:>6} {:>12.8} {:>12}  {}", p.key(), p.theta_dim(), primal, conj, smooth);
    }

    println!("\nderivatives of the quantile Huber at theta = (0.5, 0.5):");
    let p = shapetune::Penalty::QuantileHuber;
    for r in [-2.0, 0.3, 3.0] {
        let dr = p.grad_r(r, &[0.5, 0.5]).unwrap();
        let dt = p.grad_theta(r, &[0.5, 0.5]).unwrap();
        println!("  r = {r:>5}: d rho/dr = {dr:>6.3}, grad_theta = [{:.3}, {:.3}]", dt[0], dt[1]);
    }
}
