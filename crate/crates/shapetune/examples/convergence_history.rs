//! Convergence histories of PALM and the interior-point method on identical
//! quantile-Huber instances at tau in {0.1, 0.5, 0.9}.

use shapetune::experiments::{run_convergence, ExperimentConfig};

fn main() {
    let out = std::env::temp_dir().join("shapetune_converge_example");
    let cfg = ExperimentConfig {
        subcommand: "converge".into(),
        m: 1000,
        n: 50,
        seed: 12,
        out: out.clone(),
        ..Default::default()
    };
    match run_convergence(&cfg) {
        Ok(stats) => {
            for s in &stats {
                println!(
                    "tau = {}: IP converged in {} iterations, PALM in {}; final objectives agree to {:.2e}",
                    s.tau, s.ip_iters, s.palm_iters, s.final_gap_rel
                );
            }
            println!("curves written to {}", out.display());
        }
        Err(e) => {
            eprintln!("convergence run failed: {e}");
            std::process::exit(1);
        }
    }
}
