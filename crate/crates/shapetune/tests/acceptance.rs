//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (visible with `cargo test -- --nocapture`).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use shapetune::experiments::{run_table, ExperimentConfig};
use shapetune::ip::{
    assemble_dense_jacobian, ip_solve, kkt_jacobian_apply, kkt_residual, solve_newton_system,
    IpOptions, IpProblem, IpState,
};
use shapetune::normalization::{quadrature_nc, NcMode, NormalizationModel};
use shapetune::palm::{palm_solve, PalmOptions, PalmProblem};
use shapetune::rng::{compose_seed, CounterRng};
use shapetune::rpca::{
    eval_rpca_objective, residual_ecdf, rpca_solve, synthetic_spike_instance, RpcaOptions,
    RpcaProblem,
};
use shapetune::sampling::{generate_regression, ks_statistic, sample_residuals, PiecewiseCdf, SyntheticSpec};
use shapetune::Penalty;

fn pass(criterion: &str, detail: String) {
    println!("ACCEPTANCE {criterion}: PASS ({detail})");
}

fn table_config(sub: &str, out_tag: &str) -> ExperimentConfig {
    let out = std::env::temp_dir().join(format!("shapetune_accept_{out_tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&out);
    let (m, n) = if sub == "table1" { (1000, 50) } else { (500, 50) };
    ExperimentConfig {
        subcommand: sub.into(),
        m,
        n,
        trials: 10,
        seed: 7777,
        out,
        ..Default::default()
    }
}

/// Criteria 1-3: the two table reproductions and the iteration budget, run
/// off the same summaries.
#[test]
fn criteria_1_2_3_table_reproductions_and_iteration_budget() {
    let t0 = Instant::now();

    // Criterion 1: Table 2 (quantile, IP). Per the table contract, trials
    // whose sampled instance makes the solver fail (e.g. a degenerate
    // profile likelihood with the ML at infinity) are flagged and excluded
    // from the means, within a 20% budget.
    let cfg2 = table_config("table2", "t2");
    let s2 = run_table(&cfg2).unwrap();
    assert!(s2.failed_fraction() <= 0.2, "table2 failure budget exceeded");
    let taus = [0.1, 0.2, 0.5, 0.8, 0.9];
    for (row, &tau_t) in s2.rows.iter().zip(&taus) {
        assert!(
            (row.mean_theta[0] - tau_t).abs() <= 0.03,
            "tau* {} vs tau_t {tau_t}",
            row.mean_theta[0]
        );
        assert!(
            row.mean_err_self <= row.mean_err_ls,
            "self {} > ls {} at {tau_t}",
            row.mean_err_self,
            row.mean_err_ls
        );
        if tau_t == 0.1 || tau_t == 0.9 {
            let ratio = row.mean_err_ls / row.mean_err_self;
            assert!(ratio >= 1.5, "improvement ratio {ratio} at tau {tau_t}");
        }
    }
    let elapsed = t0.elapsed();
    pass(
        "1 (table 2 reproduction)",
        format!(
            "tau* = {:?}, self/ls improvement at edges {:.2}x and {:.2}x, {:.1?}",
            s2.rows.iter().map(|r| (r.mean_theta[0] * 1e3).round() / 1e3).collect::<Vec<_>>(),
            s2.rows[0].mean_err_ls / s2.rows[0].mean_err_self,
            s2.rows[4].mean_err_ls / s2.rows[4].mean_err_self,
            elapsed
        ),
    );

    // Criterion 2: Table 1 (quantile Huber).
    let cfg1 = table_config("table1", "t1");
    let s1 = run_table(&cfg1).unwrap();
    assert!(s1.failed_fraction() <= 0.2, "table1 failure budget exceeded");
    for (row, &tau_t) in s1.rows.iter().zip(&taus) {
        let (tau_s, kappa_s) = Penalty::quantile_huber_tau_kappa(&row.mean_theta);
        assert!((tau_s - tau_t).abs() <= 0.03, "tau* {tau_s} vs {tau_t}");
        assert!((kappa_s - 1.0).abs() <= 0.3, "kappa* {kappa_s}");
        if tau_t == 0.1 || tau_t == 0.9 {
            assert!(row.mean_err_self < row.mean_err_ls, "self vs ls at {tau_t}");
            assert!(row.mean_err_self < row.mean_err_l1, "self vs l1 at {tau_t}");
        }
    }
    pass(
        "2 (table 1 reproduction)",
        format!(
            "{} of {} trials excluded as degenerate draws; (tau*, kappa*) = {:?}",
            s1.trials_failed + s2.trials_failed,
            s1.trials_total + s2.trials_total,
            s1.rows
                .iter()
                .map(|r| {
                    let (t, k) = Penalty::quantile_huber_tau_kappa(&r.mean_theta);
                    ((t * 1e3).round() / 1e3, (k * 1e3).round() / 1e3)
                })
                .collect::<Vec<_>>()
        ),
    );

    // Criterion 3: Newton iteration counts over all converged instances.
    let max_iters =
        s1.rows.iter().chain(s2.rows.iter()).map(|r| r.max_iters).max().unwrap();
    assert!(max_iters < 30, "hard iteration threshold exceeded: {max_iters}");
    let under20 = s1.rows.iter().chain(s2.rows.iter()).filter(|r| r.max_iters < 20).count();
    pass(
        "3 (IP iteration budget)",
        format!(
            "worst {} Newton iterations (< 30 hard threshold; {}/10 rows under the sub-20 target)",
            max_iters, under20
        ),
    );

    let total = t0.elapsed();
    assert!(total.as_secs() < 300, "runtime {total:?} exceeds 5 minutes");
}

#[test]
fn criterion_4_normalization_correctness() {
    // 100-point theta grid split across the three closed-form families.
    let mut worst_rel: f64 = 0.0;
    let mut checks = 0usize;
    let grid_1d: Vec<f64> = (0..34).map(|i| 0.05 + 0.9 * i as f64 / 33.0).collect();
    for &tau in &grid_1d {
        let closed = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
        let (c, _) = closed.nc(&[tau]).unwrap();
        let (q, _) = quadrature_nc(Penalty::Quantile, &[tau], 1e-12, 10_000).unwrap();
        worst_rel = worst_rel.max((c - q).abs() / c);
        checks += 1;
    }
    let mut rng = CounterRng::new(11, 11);
    for p in [Penalty::QuantileHuber, Penalty::HuberScaled] {
        for _ in 0..33 {
            let theta = [0.3 + 2.2 * rng.uniform(), 0.2 + 2.8 * rng.uniform()];
            let closed = NormalizationModel::new(p, NcMode::ClosedForm).unwrap();
            let (c, _) = closed.nc(&theta).unwrap();
            let (q, _) = quadrature_nc(p, &theta, 1e-12, 10_000).unwrap();
            worst_rel = worst_rel.max((c - q).abs() / c);
            checks += 1;
        }
    }
    assert!(worst_rel <= 1e-8, "closed vs quadrature relative {worst_rel}");

    // Gradient and Hessian against central differences.
    let mut worst_d: f64 = 0.0;
    for (p, thetas) in [
        (Penalty::Quantile, vec![vec![0.2], vec![0.5], vec![0.85]]),
        (Penalty::QuantileHuber, vec![vec![0.7, 1.3], vec![1.0, 1.0], vec![0.4, 2.0]]),
        (Penalty::HuberScaled, vec![vec![1.0, 1.0], vec![0.7, 0.4], vec![2.0, 1.5]]),
    ] {
        let model = NormalizationModel::new(p, NcMode::ClosedForm).unwrap();
        for theta in thetas {
            let g = model.grad_log_nc(&theta).unwrap();
            let hess = model.hess_log_nc(&theta).unwrap();
            let h = 1e-6;
            for i in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (model.log_nc(&tp).unwrap() - model.log_nc(&tm).unwrap()) / (2.0 * h);
                worst_d = worst_d.max((g[i] - fd).abs() / (1.0 + fd.abs()));
                let gp = model.grad_log_nc(&tp).unwrap();
                let gm = model.grad_log_nc(&tm).unwrap();
                for j in 0..theta.len() {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                    worst_d = worst_d.max((hess[(i, j)] - fd2).abs() / (1.0 + fd2.abs()));
                }
            }
        }
    }
    assert!(worst_d <= 1e-5, "derivative vs finite differences {worst_d}");
    pass(
        "4 (normalization correctness)",
        format!("{checks} grid points, worst closed/quadrature rel {worst_rel:.2e}, worst derivative dev {worst_d:.2e}"),
    );
}

#[test]
fn criterion_5_convexity_and_barrier() {
    let model = NormalizationModel::new(Penalty::Quantile, NcMode::ClosedForm).unwrap();
    let n = 91;
    let taus: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = taus.iter().map(|&t| model.log_nc(&[t]).unwrap()).collect();
    let mut min_second: f64 = f64::INFINITY;
    for w in vals.windows(3) {
        min_second = min_second.min(w[0] - 2.0 * w[1] + w[2]);
    }
    assert!(min_second >= -1e-10, "second difference {min_second}");
    let (a, b, c) = (
        model.log_nc(&[0.001]).unwrap(),
        model.log_nc(&[0.01]).unwrap(),
        model.log_nc(&[0.1]).unwrap(),
    );
    assert!(a > b && b > c, "barrier ordering {a} {b} {c}");
    pass(
        "5 (convexity and barrier)",
        format!("min second difference {min_second:.2e}, log nc(0.001)={a:.3} > {b:.3} > {c:.3}"),
    );
}

fn random_interior_state(problem: &IpProblem, rng: &mut CounterRng) -> IpState {
    let m = problem.m();
    let atom = &problem.atom;
    let (k_u, k_c) = (atom.k_u(), atom.k_c());
    let k_s = problem.domain.k_s();
    let theta = problem.domain.interior.clone();
    let cbar = atom.constraint_bound_at(theta.as_slice());
    let u_scale = 0.2 * cbar.iter().cloned().fold(f64::INFINITY, f64::min)
        / (1.0 + atom.constraint_mat.amax());
    IpState {
        d1: DVector::from_fn(k_s, |_, _| 0.5 + rng.uniform()),
        q1: DVector::from_fn(k_s, |_, _| 0.5 + rng.uniform()),
        q2: DVector::from_fn(m * k_c, |_, _| 0.5 + rng.uniform()),
        u: DVector::from_fn(m * k_u, |_, _| u_scale * (2.0 * rng.uniform() - 1.0)),
        x: DVector::from_fn(problem.n(), |_, _| rng.standard_normal()),
        theta,
        mu: 0.25,
    }
}

#[test]
fn criterion_6_kkt_block_solve_and_jacobian() {
    let mut rng = CounterRng::new(606, 1);
    let mut worst_solve: f64 = 0.0;
    let mut worst_jvp: f64 = 0.0;
    for inst in 0..50u64 {
        let penalty = if inst % 2 == 0 { Penalty::Quantile } else { Penalty::QuantileHuber };
        let m = 3 + (rng.next_u64() % 18) as usize; // 3..=20
        let n = 1 + (rng.next_u64() % 5) as usize; // 1..=5
        let theta_true = match penalty {
            Penalty::Quantile => vec![0.2 + 0.6 * rng.uniform()],
            _ => vec![0.3 + rng.uniform(), 0.3 + rng.uniform()],
        };
        let g = generate_regression(&SyntheticSpec {
            m: m.max(n + 1),
            n,
            penalty,
            theta_true,
            seed: compose_seed(&[606, inst]),
            x_true: None,
        })
        .unwrap();
        let problem = IpProblem::new(g.a, g.y, penalty).unwrap();
        let state = random_interior_state(&problem, &mut rng);
        let dim = 2 * problem.domain.k_s()
            + problem.m() * (problem.atom.k_c() + problem.atom.k_u())
            + problem.n()
            + state.theta.len();
        let rhs = DVector::from_fn(dim, |_, _| rng.standard_normal());
        let p_block = solve_newton_system(&state, &problem, &rhs).unwrap();
        let dense = assemble_dense_jacobian(&state, &problem).unwrap();
        let p_dense = dense.clone().lu().solve(&rhs).unwrap();
        worst_solve = worst_solve.max((&p_block - &p_dense).norm() / p_dense.norm());

        // Jacobian-vector product vs central differences of F.
        let v = DVector::from_fn(dim, |_, _| rng.standard_normal());
        let jv = kkt_jacobian_apply(&state, &problem, &v).unwrap();
        let h = 1e-6;
        let perturb = |sign: f64| {
            let mut z = state.clone();
            let k_s = problem.domain.k_s();
            let m = problem.m();
            let (k_c, k_u) = (problem.atom.k_c(), problem.atom.k_u());
            let mut off = 0;
            for j in 0..k_s {
                z.d1[j] += sign * h * v[off + j];
            }
            off += k_s;
            for j in 0..k_s {
                z.q1[j] += sign * h * v[off + j];
            }
            off += k_s;
            for j in 0..m * k_c {
                z.q2[j] += sign * h * v[off + j];
            }
            off += m * k_c;
            for j in 0..m * k_u {
                z.u[j] += sign * h * v[off + j];
            }
            off += m * k_u;
            for j in 0..problem.n() {
                z.x[j] += sign * h * v[off + j];
            }
            off += problem.n();
            for j in 0..z.theta.len() {
                z.theta[j] += sign * h * v[off + j];
            }
            z
        };
        let fp = kkt_residual(&perturb(1.0), &problem).unwrap();
        let fm = kkt_residual(&perturb(-1.0), &problem).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        worst_jvp = worst_jvp.max((&jv - &fd).norm() / (1.0 + jv.norm()));
    }
    assert!(worst_solve <= 1e-10, "block vs dense {worst_solve}");
    assert!(worst_jvp <= 1e-5, "jvp vs fd {worst_jvp}");
    pass(
        "6 (KKT machinery)",
        format!("50 instances: block vs dense {worst_solve:.2e}, Jacobian vs FD {worst_jvp:.2e}"),
    );
}

#[test]
fn criterion_7_palm_descent_and_cross_solver_agreement() {
    let mut worst_gap: f64 = 0.0;
    for (k, tau) in [0.1, 0.5, 0.9].iter().enumerate() {
        let theta_true = Penalty::quantile_huber_theta(*tau, 1.0).to_vec();
        let g = generate_regression(&SyntheticSpec {
            m: 1000,
            n: 50,
            penalty: Penalty::QuantileHuber,
            theta_true,
            seed: compose_seed(&[707, k as u64]),
            x_true: None,
        })
        .unwrap();
        let model = NormalizationModel::new(Penalty::QuantileHuber, NcMode::Auto).unwrap();
        let pp = PalmProblem::new(g.a.clone(), g.y.clone(), Penalty::QuantileHuber, model).unwrap();
        let palm = palm_solve(&pp, None, None, &PalmOptions::default()).unwrap();
        for w in palm.trace.rows.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-12 * (1.0 + w[0].objective.abs()),
                "PALM objective rose at iter {} (tau {tau})",
                w[1].iter
            );
        }
        let ip_problem = IpProblem::new(g.a, g.y, Penalty::QuantileHuber).unwrap();
        let ip = ip_solve(&ip_problem, None, &IpOptions::default()).unwrap();
        let gap = (ip.objective - palm.objective).abs() / (1.0 + ip.objective.abs());
        assert!(gap <= 1e-4, "cross-solver gap {gap} at tau {tau}");
        worst_gap = worst_gap.max(gap);
    }
    pass(
        "7 (PALM descent, cross-solver agreement)",
        format!("monotone on all traces; worst objective gap {worst_gap:.2e}"),
    );
}

#[test]
fn criterion_8_sampling_fidelity() {
    let m = 100_000;
    let mut worst: f64 = 0.0;
    for (p, theta) in [
        (Penalty::Quantile, vec![0.1]),
        (Penalty::Quantile, vec![0.5]),
        (Penalty::Quantile, vec![0.9]),
        (Penalty::QuantileHuber, vec![1.0, 1.0]),
    ] {
        let mut s = sample_residuals(p, &theta, m, 808, 3).unwrap();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = PiecewiseCdf::build(p, &theta).unwrap();
        let d = ks_statistic(&s, |x| cdf.cdf(x));
        assert!(d <= 0.006, "{} theta {:?}: KS {d}", p.key(), theta);
        worst = worst.max(d);
    }
    pass("8 (sampling fidelity)", format!("worst KS over 1e5 draws {worst:.5}"));
}

#[test]
fn criterion_9_rpca_properties() {
    let theta_bad = vec![20.0, 5.0];
    let (y, l0, _) = synthetic_spike_instance(60, 40, 10.0, 1e-3, 909);
    let problem = RpcaProblem::new(y.clone(), Penalty::HuberizedT, theta_bad.clone()).unwrap();
    let tuned = rpca_solve(&problem, &RpcaOptions::default()).unwrap();
    let rel = (&tuned.background - &l0).norm() / l0.norm();
    assert!(rel <= 0.05, "recovery error {rel}");

    let frozen_problem = RpcaProblem::new(y.clone(), Penalty::HuberizedT, theta_bad).unwrap();
    let frozen = rpca_solve(
        &frozen_problem,
        &RpcaOptions { freeze_theta: true, ..Default::default() },
    )
    .unwrap();
    let rel_frozen = (&frozen.background - &l0).norm() / l0.norm();
    assert!(rel <= rel_frozen + 1e-12, "self-tuned {rel} vs frozen {rel_frozen}");

    // Gauge invariance under an orthogonal rotation of both factors.
    let c = 0.8f64;
    let s = (1.0 - c * c).sqrt();
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let base = eval_rpca_objective(&problem, &tuned.u, &tuned.v, tuned.theta.as_slice()).unwrap();
    let rotated =
        eval_rpca_objective(&problem, &(&q * &tuned.u), &(&q * &tuned.v), tuned.theta.as_slice())
            .unwrap();
    let gauge = (base - rotated).abs() / (1.0 + base.abs());
    assert!(gauge <= 1e-9, "gauge deviation {gauge}");

    // The generating family wins the residual-ECDF ranking.
    let draws = sample_residuals(Penalty::HuberizedT, &[2.0, 0.4], 6000, 31, 9).unwrap();
    let resid = DMatrix::from_vec(100, 60, draws);
    let report = residual_ecdf(&resid).unwrap();
    assert_eq!(report.fits[0].family, "huberized_t", "{:?}", report.fits);

    pass(
        "9 (RPCA properties)",
        format!(
            "recovery {rel:.4} (frozen {rel_frozen:.4}), gauge {gauge:.1e}, ecdf winner {}",
            report.fits[0].family
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let run = |tag: &str| {
        let mut cfg = table_config("table2", tag);
        cfg.m = 200;
        cfg.n = 10;
        cfg.trials = 3;
        cfg.theta_true = Some(vec![0.3]);
        run_table(&cfg).unwrap();
        std::fs::read(cfg.out.join("table2.csv")).unwrap()
    };
    let a = run("det_a");
    let b = run("det_b");
    assert_eq!(a, b, "table2 CSVs differ between identical runs");
    pass("10 (determinism)", format!("byte-identical CSVs ({} bytes)", a.len()));
}
