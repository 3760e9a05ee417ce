use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use resflow::builder::{self, PartitionPath, PathReport};
use resflow::calculus;
use resflow::driver::{self, KappaPolicy, RestartOptions, RestartSequence, StopReason};
use resflow::flow::{self, fmt_f64, FlowKind, PathTrace};
use resflow::sampling::BallSampler;
use resflow::spectral;
use resflow::{corpus, InverseOperator, KappaEstimate, Problem};
use serde_json::json;

use crate::config::{KappaSpec, RunArgs, RunConfig};
use crate::summary::*;
use crate::svg::{line_plot, Series};
use crate::{CliError, FlowChoice};

/// Closed-form `κ` may not undercut the sampled estimate by more than this.
pub const KAPPA_CROSS_CHECK_TOL: f64 = 1e-8;
/// Step used by `verify` for forward differences.
pub const FD_STEP: f64 = 1e-7;
/// Largest accepted relative derivative mismatch in `verify`.
pub const FD_TOLERANCE: f64 = 1e-5;

type Outcome = Result<bool, CliError>;

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_with<F>(dir: &Path, name: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    write_with(dir, name, |w| w.write_all(text.as_bytes()))
}

/// Wall time lives outside the JSON so summaries stay byte-reproducible.
fn write_timing(dir: &Path, started: Instant) -> Result<(), CliError> {
    let secs = started.elapsed().as_secs_f64();
    println!("wall time: {secs:.3} s");
    write_text(dir, "timing.txt", &format!("wall_time_seconds = {secs}\n"))
}

fn finish(summary: RunSummary, dir: &Path, started: Instant) -> Outcome {
    if let Some(e) = &summary.error {
        eprintln!("resflow: {e}");
    }
    let summary = summary.finish(dir)?;
    for c in &summary.certifications {
        println!(
            "{} {}: {} <= {} (+{})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            fmt_f64(c.lhs),
            fmt_f64(c.rhs),
            fmt_f64(c.slack)
        );
    }
    write_timing(dir, started)?;
    Ok(summary.all_passed)
}

fn problem_json(p: &Problem) -> serde_json::Value {
    json!({
        "name": p.name(),
        "input_dim": p.input_dim(),
        "output_dim": p.output_dim(),
        "x0": p.x0().as_slice(),
        "radius": p.radius(),
    })
}

/// Sampled estimate, or the configured closed form after checking that it does
/// not fall below the sampled one.
fn resolve_kappa(problem: &Problem, op: &InverseOperator, cfg: &RunConfig) -> Result<KappaEstimate, String> {
    let sampled = spectral::estimate_kappa(problem, op, cfg.samples, cfg.seed).map_err(|e| e.to_string());
    match cfg.kappa_method {
        KappaSpec::SampledBall => sampled,
        KappaSpec::ClosedForm(v) => {
            let sampled = sampled?;
            if v < sampled.value - KAPPA_CROSS_CHECK_TOL {
                return Err(format!(
                    "closed-form kappa {v} is below the sampled estimate {} (at {:?})",
                    sampled.value, sampled.argmax_point
                ));
            }
            KappaEstimate::closed_form(v).map_err(|e| e.to_string())
        }
    }
}

fn max_or_nan(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, |acc, v| {
        if v.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(v)
        }
    })
}

fn trace_plot(trace: &PathTrace, title: &str) -> String {
    let pts = |f: &dyn Fn(&flow::TracePoint) -> f64| trace.points.iter().map(|p| (p.t, f(p))).collect();
    let f0 = trace.initial_residual_norm();
    let (defect_label, reference) = match trace.kind {
        FlowKind::ContinuousNewton => (
            "| ‖F‖ − e^(−t)‖F(x0)‖ |",
            Series {
                label: "e^(−t)‖F(x0)‖",
                points: pts(&|p| (-p.t).exp() * f0),
                dashed: true,
            },
        ),
        _ => (
            "defect(t)",
            Series {
                label: "κ̂·t·‖F(x0)‖",
                points: pts(&|p| p.bound),
                dashed: true,
            },
        ),
    };
    line_plot(
        title,
        "t",
        &[
            Series {
                label: "‖F(x(t))‖",
                points: pts(&|p| p.norm_f),
                dashed: false,
            },
            Series {
                label: defect_label,
                points: pts(&|p| p.defect),
                dashed: false,
            },
            reference,
        ],
    )
}

fn trace_result(problem: &Problem, op: Option<&InverseOperator>, trace: &PathTrace) -> serde_json::Value {
    let terminal = trace.terminal_point();
    json!({
        "flow": trace.kind,
        "problem": problem_json(problem),
        "operator": op.map(|o| o.describe()),
        "kappa": trace.kappa_used,
        "initial_residual_norm": trace.initial_residual_norm(),
        "terminal": terminal.x.as_slice(),
        "terminal_time": terminal.t,
        "terminal_residual_norm": terminal.norm_f,
        "max_defect": trace.max_defect(),
        "checkpoints": trace.points.len(),
        "exited_ball": trace.exited_ball,
        "integrator": trace.stats,
    })
}

fn certify_trace(summary: &mut RunSummary, trace: &PathTrace, cfg: &RunConfig) {
    let f0 = trace.initial_residual_norm();
    let abs = cfg.integrator.abs_tol;
    match trace.kind {
        FlowKind::ContinuousNewton => summary.certify(Certification::check(
            EXPONENTIAL_RESIDUAL_DECAY,
            "max_t | ‖F(z(t))‖ − e^(−t)‖F(x0)‖ | <= 0",
            trace.max_defect(),
            0.0,
            100.0 * abs,
        )),
        kind => {
            let slack = match kind {
                FlowKind::Davidenko => 100.0 * (abs + cfg.integrator.rel_tol * f0),
                _ => 100.0 * abs,
            };
            let kappa = trace.kappa_used.value;
            summary.certify(Certification::check(
                PATH_HOMOTOPY_BOUND,
                "max_t [ ‖F(x(t)) − (1−t)F(x0)‖ − κ̂·t·‖F(x0)‖ ] <= 0",
                trace.max_bound_excess(),
                0.0,
                slack,
            ));
            summary.certify(Certification::check(
                TERMINAL_RESIDUAL_BOUND,
                "‖F(x(1))‖ <= κ̂·‖F(x0)‖",
                trace.terminal_point().norm_f,
                kappa * f0,
                slack,
            ));
        }
    }
}

pub fn follow(args: &RunArgs, choice: FlowChoice, horizon: f64) -> Outcome {
    let cfg = args.resolve(true)?;
    if choice == FlowChoice::ContinuousNewton && !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(CliError::Config(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    let problem = cfg.problem()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("follow", &cfg);

    let run = || -> Result<(PathTrace, Option<InverseOperator>), String> {
        match choice {
            FlowChoice::Generalized => {
                let op = cfg.operator.build(&problem).map_err(|e| e.to_string())?;
                let kappa = resolve_kappa(&problem, &op, &cfg)?;
                let trace =
                    flow::follow_generalized(&problem, &op, &kappa, &cfg.integrator).map_err(|e| e.to_string())?;
                Ok((trace, Some(op)))
            }
            FlowChoice::Davidenko => flow::follow_davidenko(&problem, &cfg.integrator)
                .map(|t| (t, None))
                .map_err(|e| e.to_string()),
            FlowChoice::ContinuousNewton => flow::follow_continuous_newton(&problem, horizon, &cfg.integrator)
                .map(|t| (t, None))
                .map_err(|e| e.to_string()),
        }
    };

    match run() {
        Ok((trace, op)) => {
            let mut result = trace_result(&problem, op.as_ref(), &trace);
            if choice == FlowChoice::ContinuousNewton {
                result["horizon"] = json!(horizon);
            }
            summary.result = result;
            certify_trace(&mut summary, &trace, &cfg);
            write_with(dir, "trace.csv", |w| trace.write_csv(w))?;
            let title = format!("{} on {}", flow_label(trace.kind), problem.name());
            write_text(dir, "plot.svg", &trace_plot(&trace, &title))?;
            println!(
                "terminal x = {:?}, ‖F‖ = {}",
                trace.terminal.as_slice(),
                fmt_f64(trace.terminal_point().norm_f)
            );
        }
        Err(e) => {
            summary.result = json!({ "problem": problem_json(&problem) });
            summary.fail(e);
        }
    }
    finish(summary, dir, started)
}

fn flow_label(kind: FlowKind) -> &'static str {
    match kind {
        FlowKind::Davidenko => "Davidenko flow",
        FlowKind::ContinuousNewton => "continuous Newton flow",
        FlowKind::Generalized => "generalized flow",
    }
}

fn certify_partition(summary: &mut RunSummary, path: &PartitionPath, report: &PathReport) {
    let step_excess = max_or_nan(report.step_checks.iter().map(|c| c.lhs - c.rhs));
    summary.certify(Certification::check(
        PARTITION_STEP_BOUND,
        "max_i [ ‖F(w_i) − F(w_(i−1)) + s_i·F(x0)‖ − s_i·ε − κ̂·s_i·‖F(x0)‖ ] <= 0",
        if report.evaluation_failures > 0 {
            f64::NAN
        } else {
            step_excess.max(0.0)
        },
        0.0,
        0.0,
    ));
    let cumulative_excess = max_or_nan(report.cumulative_defects.iter().map(|c| c.defect - c.bound));
    summary.certify(Certification::check(
        CUMULATIVE_PARTITION_BOUND,
        "max_j [ ‖F(w_j) − (1−t_j)F(x0)‖ − t_j·ε − κ̂·t_j·‖F(x0)‖ ] <= 0",
        cumulative_excess,
        0.0,
        0.0,
    ));
    summary.certify(Certification::check(
        PARTITION_LIPSCHITZ,
        "max_(s,t) [ ‖x(t) − x(s)‖ − r·|t − s| ] <= 0",
        report.max_lipschitz_excess,
        0.0,
        builder::GEOMETRY_SLACK,
    ));
    let containment = max_or_nan(
        path.nodes
            .iter()
            .zip(&path.values)
            .map(|(t, x)| (x - &path.x0).norm() - path.radius * t),
    );
    summary.certify(Certification::check(
        PARTITION_CONTAINMENT,
        "max_i [ ‖w_i − x0‖ − r·t_i ] <= 0",
        containment,
        0.0,
        builder::GEOMETRY_SLACK,
    ));
}

pub fn build_path(args: &RunArgs, level: u32) -> Outcome {
    let cfg = args.resolve(true)?;
    if !(1..=builder::MAX_LEVEL).contains(&level) {
        return Err(CliError::Config(format!(
            "level must be in 1..={}, got {level}",
            builder::MAX_LEVEL
        )));
    }
    let problem = cfg.problem()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("build-path", &cfg);

    let run = || -> Result<(PartitionPath, InverseOperator), String> {
        let op = cfg.operator.build(&problem).map_err(|e| e.to_string())?;
        let kappa = resolve_kappa(&problem, &op, &cfg)?;
        let path = builder::build_path(&problem, &op, level, &kappa).map_err(|e| e.to_string())?;
        Ok((path, op))
    };

    match run() {
        Ok((path, op)) => {
            let report = builder::verify_path(&problem, &path);
            summary.result = json!({
                "problem": problem_json(&problem),
                "operator": op.describe(),
                "level": level,
                "nodes": path.node_count(),
                "epsilon": path.epsilon,
                "kappa": path.kappa_used,
                "terminal": path.terminal().as_slice(),
                "terminal_residual_norm": path.residuals.last().map(|f| f.norm()),
                "terminal_bound": path.cumulative_bound(1.0),
                "report": {
                    "passed": report.passed(),
                    "max_step_violation": report.max_step_violation,
                    "cumulative_ok": report.cumulative_ok,
                    "lipschitz_ok": report.lipschitz_ok,
                    "max_lipschitz_excess": report.max_lipschitz_excess,
                    "lipschitz_pairs": report.lipschitz_pairs,
                    "containment_ok": report.containment_ok,
                    "evaluation_failures": report.evaluation_failures,
                },
            });
            certify_partition(&mut summary, &path, &report);
            write_with(dir, "path.csv", |w| path.write_csv(w))?;
            let acceptance = json!({ "acceptance": path.acceptance_log(), "report": report });
            write_text(
                dir,
                "acceptance.json",
                &(serde_json::to_string_pretty(&acceptance).expect("serializes") + "\n"),
            )?;
            let f0 = path.f0.norm();
            let defects: Vec<(f64, f64)> = report.cumulative_defects.iter().map(|c| (c.t, c.defect)).collect();
            let plot = line_plot(
                &format!("level-{level} partition path on {}", problem.name()),
                "t",
                &[
                    Series {
                        label: "‖F(w_i)‖",
                        points: path
                            .nodes
                            .iter()
                            .zip(&path.residuals)
                            .map(|(t, f)| (*t, f.norm()))
                            .collect(),
                        dashed: false,
                    },
                    Series {
                        label: "defect(t_i)",
                        points: defects,
                        dashed: false,
                    },
                    Series {
                        label: "t·ε + κ̂·t·‖F(x0)‖",
                        points: path.nodes.iter().map(|t| (*t, path.cumulative_bound(*t))).collect(),
                        dashed: true,
                    },
                ],
            );
            write_text(dir, "plot.svg", &plot)?;
            println!(
                "{} nodes, ‖F(x0)‖ = {}, terminal ‖F‖ = {}",
                path.node_count(),
                fmt_f64(f0),
                fmt_f64(summary.result["terminal_residual_norm"].as_f64().unwrap_or(f64::NAN))
            );
        }
        Err(e) => {
            summary.result = json!({ "problem": problem_json(&problem), "level": level });
            summary.fail(e);
        }
    }
    finish(summary, dir, started)
}

fn write_restart_csv<W: Write>(seq: &RestartSequence, w: &mut W) -> std::io::Result<()> {
    let n = seq.iterates[0].len();
    let mut header = vec!["i".to_string()];
    header.extend((1..=n).map(|j| format!("u_{j}")));
    header.extend(["normF", "bound", "kappa"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for (i, u) in seq.iterates.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(u.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(seq.residual_norms[i]));
        row.push(fmt_f64(seq.bounds[i]));
        row.push(i.checked_sub(1).map_or(String::new(), |j| fmt_f64(seq.kappas[j].value)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn restart(args: &RunArgs, max_iters: usize, tol: f64, refresh: bool) -> Outcome {
    let cfg = args.resolve(true)?;
    if max_iters == 0 {
        return Err(CliError::Config("max-iters must be >= 1".into()));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Config(format!("tol must be > 0, got {tol}")));
    }
    let problem = cfg.problem()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("restart", &cfg);

    let run = || -> Result<(RestartSequence, InverseOperator), String> {
        let op = cfg.operator.build(&problem).map_err(|e| e.to_string())?;
        let kappa = match cfg.kappa_method {
            KappaSpec::ClosedForm(v) => {
                resolve_kappa(&problem, &op, &cfg)?;
                KappaPolicy::ClosedForm(v)
            }
            KappaSpec::SampledBall => KappaPolicy::Sampled {
                samples: cfg.samples,
                seed: cfg.seed,
            },
        };
        let opts = RestartOptions {
            refresh_operator: refresh,
            kappa,
        };
        let seq = driver::iterate_restarts_with(&problem, &op, max_iters, tol, &cfg.integrator, &opts)
            .map_err(|e| e.to_string())?;
        Ok((seq, op))
    };

    match run() {
        Ok((seq, op)) => {
            let per_restart = 100.0 * cfg.integrator.abs_tol;
            let excess = max_or_nan(
                seq.residual_norms
                    .iter()
                    .zip(&seq.bounds)
                    .enumerate()
                    .map(|(i, (r, b))| r - b - i as f64 * per_restart),
            );
            summary.certify(Certification::check(
                RESTART_GEOMETRIC_BOUND,
                "max_i [ ‖F(u_i)‖ − κ̂^i·‖F(u_0)‖ − i·100·abs_tol ] <= 0",
                excess,
                0.0,
                0.0,
            ));
            match seq.stopped_reason {
                StopReason::DivergenceDetected => {
                    summary.fail(format!("divergence detected after {} restarts", seq.restarts()))
                }
                StopReason::FollowerFailure => summary.fail(format!(
                    "follower failed at restart {}: {}",
                    seq.restarts() + 1,
                    seq.failure.as_deref().unwrap_or("unknown")
                )),
                StopReason::ToleranceMet | StopReason::MaxIterations => {}
            }
            println!("{:>4}  {:>24}  {:>24}", "i", "‖F(u_i)‖", "κ̂^i·‖F(u_0)‖");
            for (i, (r, b)) in seq.residual_norms.iter().zip(&seq.bounds).enumerate() {
                println!("{i:>4}  {:>24}  {:>24}", fmt_f64(*r), fmt_f64(*b));
            }
            println!("stopped: {:?}", seq.stopped_reason);
            write_with(dir, "restarts.csv", |w| write_restart_csv(&seq, w))?;
            let idx = |v: &[f64]| v.iter().enumerate().map(|(i, y)| (i as f64, *y)).collect::<Vec<_>>();
            let plot = line_plot(
                &format!("restarts on {}", problem.name()),
                "restart i",
                &[
                    Series {
                        label: "‖F(u_i)‖",
                        points: idx(&seq.residual_norms),
                        dashed: false,
                    },
                    Series {
                        label: "κ̂^i·‖F(u_0)‖",
                        points: idx(&seq.bounds),
                        dashed: true,
                    },
                ],
            );
            write_text(dir, "plot.svg", &plot)?;
            summary.result = json!({
                "problem": problem_json(&problem),
                "operator": op.describe(),
                "max_iters": max_iters,
                "tol": tol,
                "refresh_operator": refresh,
                "sequence": seq,
            });
        }
        Err(e) => {
            summary.result = json!({ "problem": problem_json(&problem) });
            summary.fail(e);
        }
    }
    finish(summary, dir, started)
}

pub fn invert(args: &RunArgs, psi: &str, g: &[f64]) -> Outcome {
    let mut cfg = args.resolve(false)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("target g must be finite".into()));
    }
    let target = DVector::from_column_slice(g);
    let inv = corpus::find_inverse(psi, 0.0)
        .and_then(|i| i.with_target(target))
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.problem_name = psi.to_string();
    let derived = inv.derived_problem();
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("invert", &cfg);

    let run = || -> Result<(driver::InverseSolution, PathTrace, InverseOperator), String> {
        let op = cfg.operator.build(&derived).map_err(|e| e.to_string())?;
        let kappa = resolve_kappa(&derived, &op, &cfg)?;
        let sol = driver::solve_inverse(&inv, &op, &cfg.integrator, &kappa).map_err(|e| e.to_string())?;
        let trace = flow::follow_generalized(&derived, &op, &kappa, &cfg.integrator).map_err(|e| e.to_string())?;
        Ok((sol, trace, op))
    };

    match run() {
        Ok((sol, trace, op)) => {
            summary.certify(Certification::check(
                INVERSE_RESIDUAL_BOUND,
                "‖Ψ(u) − g‖ <= κ̂·‖g‖",
                sol.achieved,
                sol.bound,
                sol.slack,
            ));
            println!("u = {:?}, ‖Ψ(u) − g‖ = {}", sol.u.as_slice(), fmt_f64(sol.achieved));
            write_with(dir, "trace.csv", |w| trace.write_csv(w))?;
            write_text(dir, "plot.svg", &trace_plot(&trace, &format!("inverse of {psi}")))?;
            summary.result = json!({
                "psi": psi,
                "g": g,
                "problem": problem_json(&derived),
                "operator": op.describe(),
                "solution": sol,
            });
        }
        Err(e) => {
            summary.result = json!({ "psi": psi, "g": g });
            summary.fail(e);
        }
    }
    finish(summary, dir, started)
}

pub fn kappa(args: &RunArgs) -> Outcome {
    let cfg = args.resolve(true)?;
    let problem = cfg.problem()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("kappa", &cfg);

    let run = || -> Result<(KappaEstimate, KappaEstimate, InverseOperator), String> {
        let op = cfg.operator.build(&problem).map_err(|e| e.to_string())?;
        let sampled = spectral::estimate_kappa(&problem, &op, cfg.samples, cfg.seed).map_err(|e| e.to_string())?;
        let used = resolve_kappa(&problem, &op, &cfg)?;
        Ok((sampled, used, op))
    };
    match run() {
        Ok((sampled, used, op)) => {
            println!(
                "kappa = {} ({}, {} samples, {} failed), argmax = {:?}",
                fmt_f64(sampled.value),
                sampled.method,
                sampled.sample_count,
                sampled.failed_samples,
                sampled.argmax_point
            );
            summary.result = json!({
                "problem": problem_json(&problem),
                "operator": op.describe(),
                "sampled": sampled,
                "kappa": used,
            });
        }
        Err(e) => {
            summary.result = json!({ "problem": problem_json(&problem) });
            summary.fail(e);
        }
    }
    finish(summary, dir, started)
}

/// Re-evaluates `F` along a trace CSV and returns `max_t (defect(t) − bound(t))`.
fn recheck_trace(problem: &Problem, path: &Path) -> Result<(f64, usize), String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let n = problem.input_dim();
    let m = problem.output_dim();
    let header = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != PathTrace::csv_header(n, m) {
        return Err(format!(
            "{}: header does not match a trace for {}",
            path.display(),
            problem.name()
        ));
    }
    let f0 = problem.initial_residual().map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let num = |i: usize| -> Result<f64, String> {
            record[i].parse::<f64>().map_err(|e| format!("row {}: {e}", rows + 1))
        };
        let t = num(0)?;
        let x = DVector::from_iterator(n, (1..=n).map(num).collect::<Result<Vec<_>, _>>()?);
        let bound = num(1 + n + m + 2)?;
        let fx = problem.evaluate(&x).map_err(|e| e.to_string())?;
        let defect = (fx - &f0 * (1.0 - t)).norm();
        worst = worst.max(defect - bound);
        rows += 1;
    }
    if rows == 0 {
        return Err(format!("{}: no rows", path.display()));
    }
    Ok((worst, rows))
}

pub fn verify(args: &RunArgs, points: usize, trace: Option<&Path>) -> Outcome {
    let cfg = args.resolve(true)?;
    if points == 0 {
        return Err(CliError::Config("points must be >= 1".into()));
    }
    let problem = cfg.problem()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut summary = RunSummary::new("verify", &cfg);

    let xs = BallSampler::new(problem.x0().clone(), problem.radius(), cfg.seed).take(points);
    let mut dirs = BallSampler::new(DVector::zeros(problem.input_dim()), 1.0, cfg.seed.wrapping_add(1));
    let mut reports = Vec::with_capacity(points);
    let mut failure = None;
    for x in &xs {
        let mut h = dirs.next_point();
        while h.norm() == 0.0 {
            h = dirs.next_point();
        }
        h.normalize_mut();
        match calculus::check_derivative_with_step(&problem, x, &h, FD_STEP) {
            Ok(r) => reports.push(r),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let worst = max_or_nan(reports.iter().map(|r| r.rel_error));
    match failure {
        Some(e) => summary.fail(e),
        None => summary.certify(Certification::check(
            DERIVATIVE_CONSISTENCY,
            "max_(x,h) ‖J(x)h − (F(x + δh) − F(x))/δ‖ / max(1, ‖J(x)h‖) <= tol",
            worst,
            FD_TOLERANCE,
            0.0,
        )),
    }
    println!(
        "max relative derivative error over {} points: {}",
        reports.len(),
        fmt_f64(worst)
    );

    let mut trace_rows = None;
    if let Some(path) = trace {
        match recheck_trace(&problem, path) {
            Ok((excess, rows)) => {
                trace_rows = Some(rows);
                summary.certify(Certification::check(
                    PATH_HOMOTOPY_BOUND,
                    "max_t [ ‖F(x(t)) − (1−t)F(x0)‖ − bound(t) ] <= 0",
                    excess,
                    0.0,
                    100.0 * cfg.integrator.abs_tol,
                ));
            }
            Err(e) => summary.fail(e),
        }
    }
    summary.result = json!({
        "problem": problem_json(&problem),
        "fd_step": FD_STEP,
        "points": reports,
        "max_rel_error": worst,
        "trace_rows": trace_rows,
    });
    finish(summary, dir, started)
}

pub fn list_problems() {
    println!("{:<14} {:>2} {:>2} {:>8}  x0", "name", "n", "m", "radius");
    for p in corpus::corpus() {
        println!(
            "{:<14} {:>2} {:>2} {:>8}  {:?}",
            p.name(),
            p.input_dim(),
            p.output_dim(),
            fmt_f64(p.radius()),
            p.x0().as_slice()
        );
    }
    println!();
    println!(
        "inverse problems (for `invert --psi`): {}",
        corpus::inverse_names().join(", ")
    );
}
