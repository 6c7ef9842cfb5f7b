//! The value function of the shape parameters: minimize over x at each grid
//! theta (a convex inner solve with theta pinned) and tabulate the result.
//! Writes the grid CSV and an SVG rendering to a temp directory.

use shapetune::experiments::{run_value_scan, ExperimentConfig};
use shapetune::Penalty;

fn main() {
    let out = std::env::temp_dir().join("shapetune_scan_example");
    let cfg = ExperimentConfig {
        subcommand: "scan".into(),
        penalty: Penalty::Quantile,
        m: 400,
        n: 10,
        seed: 3,
        grid: 33,
        theta_true: Some(vec![0.05]),
        out: out.clone(),
        ..Default::default()
    };
    let (argmin, value) = run_value_scan(&cfg).unwrap();
    println!("generated data at tau = 0.05; scanned {} grid points", cfg.grid);
    println!("grid argmin tau = {:.4} (value {value:.4})", argmin[0]);
    println!("outputs: {}", out.display());
}
