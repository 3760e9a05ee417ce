//! Acceptance gate. Runs without the libtest harness so every criterion prints
//! one PASS/FAIL line in ordinary `cargo test` output; exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resflow::builder::{build_path, verify_path, PartitionPath};
use resflow::calculus::check_derivative_with_step;
use resflow::driver::{iterate_restarts, solve_inverse, StopReason};
use resflow::flow::{self, bridge_check, reparametrize_time, IntegratorConfig, TimeMap};
use resflow::sampling::BallSampler;
use resflow::spectral::{estimate_kappa, operator_norm, NORM_TOL};
use resflow::{corpus, InverseOperator, KappaEstimate, Problem};

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn davidenko_exactness() -> Verdict {
    let q = corpus::quadratic();
    let started = Instant::now();
    let trace = flow::follow_davidenko(&q, &cfg()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let err = (trace.terminal[0] - 2f64.sqrt()).abs();
    let worst = max(trace.points.iter().map(|p| p.defect));
    let ok = err <= 1e-6 && trace.points.len() == 33 && worst <= 1e-7 && secs < 1.0;
    (
        ok,
        format!(
            "|x(1) − √2| = {err:.1e}, max defect {worst:.1e} over {} checkpoints, {secs:.3} s",
            trace.points.len()
        ),
    )
}

fn frozen_quadratic_run() -> (flow::PathTrace, InverseOperator) {
    let q = corpus::quadratic();
    let op = InverseOperator::frozen_jacobian(&q).unwrap();
    let trace = flow::follow_generalized(&q, &op, &KappaEstimate::closed_form(0.5).unwrap(), &cfg()).unwrap();
    (trace, op)
}

fn terminal_bound() -> Verdict {
    let (trace, op) = frozen_quadratic_run();
    let m = op.apply(&DVector::from_element(1, 1.0)).unwrap()[(0, 0)];
    let f0 = trace.initial_residual_norm();
    let terminal = trace.terminal_point().norm_f;
    // x(t) = 1 + t/2 gives F(x(t)) − (1−t)F(x₀) = t²/4
    let shape = max(trace.points.iter().map(|p| (p.defect - p.t * p.t / 4.0).abs()));
    let ok = m == -0.5 && (terminal - 0.25).abs() <= 1e-6 && terminal <= 0.5 * f0 && shape <= 1e-7;
    (
        ok,
        format!(
            "‖F(x(1))‖ = {terminal:.9} <= {}, max |defect − t²/4| = {shape:.1e}",
            0.5 * f0
        ),
    )
}

fn path_inequality() -> Verdict {
    let (trace, _) = frozen_quadratic_run();
    let excess = trace
        .points
        .iter()
        .map(|p| p.defect - 0.5 * p.t)
        .fold(f64::NEG_INFINITY, f64::max);
    (
        excess <= 1e-7,
        format!(
            "max (defect(t) − 0.5·t) = {excess:.3e} over {} checkpoints",
            trace.points.len()
        ),
    )
}

fn continuous_newton_law() -> Verdict {
    let q = corpus::quadratic();
    let trace = flow::follow_continuous_newton(&q, 3.0, &cfg()).unwrap();
    let dev = max(trace.points.iter().map(|p| (p.norm_f - (-p.t).exp()).abs()));
    // z(t) = √(2 − e^{−t}) on this problem
    let path = max(trace
        .points
        .iter()
        .map(|p| (p.x[0] - (2.0 - (-p.t).exp()).sqrt()).abs()));
    (
        dev <= 1e-6 && path <= 1e-6,
        format!("max |‖F(z(t))‖ − e^(−t)| = {dev:.1e}, max |z − √(2 − e^(−t))| = {path:.1e}"),
    )
}

fn bridge_identity() -> Verdict {
    let mut worst = 0.0_f64;
    for p in [corpus::quadratic(), corpus::linear()] {
        for horizon in [0.5, 1.0, 2.0] {
            worst = worst.max(bridge_check(&p, horizon, &cfg()).unwrap());
        }
    }
    let roundtrip = max((0..=50).map(|i| {
        let t = i as f64 * 0.1;
        let w = reparametrize_time(t, TimeMap::Forward).unwrap();
        (reparametrize_time(w, TimeMap::Inverse).unwrap() - t).abs()
    }));
    (
        worst <= 1e-6 && roundtrip <= 1e-12,
        format!("max bridge gap {worst:.1e} (T in 0.5, 1, 2), roundtrip error {roundtrip:.1e} on 51 points"),
    )
}

/// Per-step and cumulative inequalities recomputed from the path's nodes alone.
fn independent_partition_check(q: &Problem, path: &PartitionPath, k: u32, kappa: f64) -> bool {
    let f0 = q.initial_residual().unwrap();
    let eps = 1.0 / k as f64;
    let f: Vec<DVector<f64>> = path.values.iter().map(|x| q.evaluate(x).unwrap()).collect();
    let steps_ok = (1..f.len()).all(|i| {
        let s = path.nodes[i] - path.nodes[i - 1];
        (&f[i] - &f[i - 1] + &f0 * s).norm() <= s * eps + kappa * s * f0.norm()
    });
    let cumulative_ok = path
        .nodes
        .iter()
        .zip(&f)
        .all(|(t, fx)| (fx - &f0 + &f0 * *t).norm() <= t * eps + kappa * t * f0.norm());
    steps_ok && cumulative_ok
}

fn builder_certificates() -> Verdict {
    let q = corpus::quadratic();
    let newton = (InverseOperator::exact_newton(&q).unwrap(), 0.0);
    // A(x) + I = 1 − x on [0.5, 1.5]
    let frozen = (InverseOperator::frozen_jacobian(&q).unwrap(), 0.5);
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, (op, kappa)) in [("exact-newton", &newton), ("frozen", &frozen)] {
        for k in 2..=6 {
            let path = build_path(&q, op, k, &KappaEstimate::closed_form(*kappa).unwrap()).unwrap();
            let report = verify_path(&q, &path);
            let ok = report.passed()
                && report.max_step_violation == 0.0
                && report.lipschitz_pairs >= 100
                && independent_partition_check(&q, &path, k, *kappa);
            if !ok {
                failures.push(format!("{name} k={k}"));
            }
            checked += 1;
        }
    }
    let mut corrupted = build_path(&q, &newton.0, 3, &KappaEstimate::closed_form(0.0).unwrap()).unwrap();
    corrupted.values[4][0] += 0.2;
    let report = verify_path(&q, &corrupted);
    let negative_fails = !(report.lipschitz_ok && report.steps_ok());
    (
        failures.is_empty() && negative_fails,
        format!("{checked} paths certified, failures {failures:?}; corrupted control rejected: {negative_fails}"),
    )
}

fn restart_contraction() -> Verdict {
    let lin = corpus::linear();
    let halving = InverseOperator::frozen_scalar(&lin, -0.5).unwrap();
    let seq = iterate_restarts(&lin, &halving, 10, 1e-12, &cfg()).unwrap();
    let err = max(seq
        .residual_norms
        .iter()
        .enumerate()
        .map(|(i, r)| (r - 0.5f64.powi(i as i32)).abs()));
    let doubling = InverseOperator::frozen_scalar(&lin, 1.0).unwrap();
    let div = iterate_restarts(&lin, &doubling, 10, 1e-12, &cfg()).unwrap();
    let ok = seq.residual_norms.len() == 11
        && err <= 1e-8
        && div.stopped_reason == StopReason::DivergenceDetected
        && div.restarts() <= 3;
    (
        ok,
        format!(
            "max |‖F(u_i)‖ − 0.5^i| = {err:.1e} for i <= 10; M = +1 stopped {:?} after {} restarts",
            div.stopped_reason,
            div.restarts()
        ),
    )
}

fn inverse_solver() -> Verdict {
    let exp = corpus::exp_minus_one(1.0);
    let newton = InverseOperator::exact_newton(&exp.derived_problem()).unwrap();
    let sol = solve_inverse(&exp, &newton, &cfg(), &KappaEstimate::closed_form(0.0).unwrap()).unwrap();
    let err = (sol.u[0] - 2f64.ln()).abs();
    let id = corpus::identity(0.7);
    let frozen = InverseOperator::frozen_scalar(&id.derived_problem(), -0.5).unwrap();
    let lin = solve_inverse(&id, &frozen, &cfg(), &KappaEstimate::closed_form(0.5).unwrap()).unwrap();
    let gap = (lin.achieved - 0.35).abs();
    (
        err <= 1e-6 && gap <= 1e-8,
        format!(
            "|u − ln 2| = {err:.1e}; identity achieved {:.12} (target 0.35)",
            lin.achieved
        ),
    )
}

fn derivative_consistency() -> Verdict {
    let mut worst = 0.0_f64;
    for (j, p) in corpus::corpus().iter().enumerate() {
        let points = BallSampler::new(p.x0().clone(), p.radius(), 100 + j as u64).take(20);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + j as u64);
        for x in points {
            let h = DVector::from_fn(p.input_dim(), |_, _| rng.random_range(-1.0..1.0)).normalize();
            let r = check_derivative_with_step(p, &x, &h, 1e-7).unwrap();
            worst = worst.max(r.rel_error);
        }
    }
    (
        worst <= 1e-5,
        format!(
            "max relative error {worst:.1e} over 20 points x {} problems",
            corpus::corpus().len()
        ),
    )
}

fn svd_oracle(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt()
}

fn kappa_estimation() -> Verdict {
    let q = corpus::quadratic();
    let frozen = InverseOperator::frozen_jacobian(&q).unwrap();
    let sampled = estimate_kappa(&q, &frozen, 200, 0).unwrap().value;
    let newton = estimate_kappa(&q, &InverseOperator::exact_newton(&q).unwrap(), 200, 0)
        .unwrap()
        .value;

    let mut mats = vec![
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(1, 3, &[3.0, 4.0, 0.0]),
        DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 2.0]),
        DMatrix::zeros(2, 3),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let (r, c) = (rng.random_range(1..=3), rng.random_range(1..=3));
        mats.push(DMatrix::from_fn(r, c, |_, _| rng.random_range(-3.0..3.0)));
    }
    let norm_err = max(mats
        .iter()
        .map(|a| (operator_norm(a, NORM_TOL).unwrap() - svd_oracle(a)).abs()));
    let ok = (0.49..=0.5).contains(&sampled) && newton <= 1e-10 && norm_err <= 1e-10;
    (
        ok,
        format!("frozen κ̂ = {sampled:.6}, exact-Newton κ̂ = {newton:.1e}, operator norm vs oracle {norm_err:.1e} on {} matrices", mats.len()),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_resflow"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .map(|o| o.status.code().is_some())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let tmp = tempfile::TempDir::new().unwrap();
    let runs: [&[&str]; 5] = [
        &[
            "follow",
            "--problem",
            "quadratic",
            "--operator",
            "frozen",
            "--seed",
            "3",
        ],
        &[
            "build-path",
            "--problem",
            "exponential",
            "--operator",
            "frozen",
            "-k",
            "4",
        ],
        &["restart", "--problem", "quadratic", "--operator", "frozen", "--refresh"],
        &["invert", "--psi", "exp-minus-one", "--g", "1"],
        &[
            "kappa",
            "--problem",
            "system2d",
            "--operator",
            "diagonal",
            "--seed",
            "9",
        ],
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        if !(run_cli(args, &a) && run_cli(args, &b)) {
            mismatches.push(format!("{} did not run", args[0]));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| {
                let n = n.to_string_lossy();
                n.ends_with(".csv") || n.ends_with(".json")
            })
            .collect();
        names.sort();
        for name in names {
            compared += 1;
            if std::fs::read(a.join(&name)).ok() != std::fs::read(b.join(&name)).ok() {
                mismatches.push(format!("{}/{}", args[0], name.to_string_lossy()));
            }
        }
    }
    (
        mismatches.is_empty() && compared >= 8,
        format!("{compared} CSV/JSON artifacts compared, mismatches {mismatches:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("Davidenko exactness", davidenko_exactness),
        ("terminal residual bound", terminal_bound),
        ("path homotopy inequality", path_inequality),
        ("continuous Newton residual law", continuous_newton_law),
        ("bridge identity", bridge_identity),
        ("partition certificates", builder_certificates),
        ("restart contraction", restart_contraction),
        ("approximate inverse", inverse_solver),
        ("derivative consistency", derivative_consistency),
        ("kappa estimation", kappa_estimation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(v) => v,
            Err(_) => (false, "panicked".to_string()),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<32} {}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            name,
            detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
