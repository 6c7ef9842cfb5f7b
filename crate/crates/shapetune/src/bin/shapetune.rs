//! Experiment runner. Every subcommand accepts the same flags; a config file
//! (flat key=value lines, keys identical to the long flag names) supplies
//! defaults and explicit flags override it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shapetune::experiments::{dispatch, ExperimentConfig};
use shapetune::io;

#[derive(Parser)]
#[command(name = "shapetune", about = "Self-tuning robust losses: experiments and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic regression instance (A, x_true, y).
    Gen(CommonArgs),
    /// Quantile-Huber shape recovery table (m=1000, n=50 protocol).
    Table1(CommonArgs),
    /// Quantile shape recovery table (m=500, n=50 protocol).
    Table2(CommonArgs),
    /// Value-function scan over the shape parameters.
    Scan(CommonArgs),
    /// PALM vs interior-point convergence histories.
    Converge(CommonArgs),
    /// Self-tuning RPCA background separation.
    Rpca(CommonArgs),
    /// Fit a single problem from user matrices.
    Fit(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with key=value lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shape parameters of the generating density, comma separated.
    #[arg(long = "theta-true")]
    theta_true: Option<String>,
    /// Solver starting shape, comma separated.
    #[arg(long = "theta-init")]
    theta_init: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// gen/fit matrix format: csv or mat.
    #[arg(long)]
    format: Option<String>,
    /// rpca: frame directory or matrix file (synthetic stack if omitted).
    #[arg(long)]
    input: Option<PathBuf>,
    /// rpca: factor rank.
    #[arg(long)]
    rank: Option<usize>,
    /// rpca: also run with theta frozen at its initial value.
    #[arg(long)]
    compare_frozen: bool,
    /// fit: design matrix path.
    #[arg(long)]
    design: Option<PathBuf>,
    /// fit: observation vector path.
    #[arg(long)]
    observations: Option<PathBuf>,
    /// scan: grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
}

fn build_config(sub: &str, args: &CommonArgs) -> shapetune::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig { subcommand: sub.to_string(), ..Default::default() };
    if let Some(path) = &args.config {
        for (k, v) in io::read_config(path)? {
            if k == "subcommand" {
                continue;
            }
            cfg.apply(&k, &v)?;
        }
    }
    let mut set = |key: &str, value: Option<String>| -> shapetune::Result<()> {
        if let Some(v) = value {
            cfg.apply(key, &v)?;
        }
        Ok(())
    };
    set("penalty", args.penalty.clone())?;
    set("solver", args.solver.clone())?;
    set("m", args.m.map(|v| v.to_string()))?;
    set("n", args.n.map(|v| v.to_string()))?;
    set("trials", args.trials.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("theta-true", args.theta_true.clone())?;
    set("theta-init", args.theta_init.clone())?;
    set("tol", args.tol.map(|v| v.to_string()))?;
    set("out", args.out.as_ref().map(|p| p.display().to_string()))?;
    set("format", args.format.clone())?;
    set("input", args.input.as_ref().map(|p| p.display().to_string()))?;
    set("rank", args.rank.map(|v| v.to_string()))?;
    set("compare-frozen", args.compare_frozen.then(|| "true".to_string()))?;
    set("design", args.design.as_ref().map(|p| p.display().to_string()))?;
    set("observations", args.observations.as_ref().map(|p| p.display().to_string()))?;
    set("grid", args.grid.map(|v| v.to_string()))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = match &cli.command {
        Command::Gen(a) => ("gen", a),
        Command::Table1(a) => ("table1", a),
        Command::Table2(a) => ("table2", a),
        Command::Scan(a) => ("scan", a),
        Command::Converge(a) => ("converge", a),
        Command::Rpca(a) => ("rpca", a),
        Command::Fit(a) => ("fit", a),
    };
    let result = build_config(sub, args).and_then(|cfg| dispatch(&cfg));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
