//! Path followers for the Davidenko flow, the continuous Newton flow and the
//! generalized flow `ẋ = M(x)F(x₀)`, plus the time change linking the first two.
//!
//! Every follower records the state at `checkpoint_count` equally spaced times
//! together with the residual and the homotopy defect there, so that the residual
//! bounds can be checked directly against the stored trace.

mod integrator;
mod trace;

use nalgebra::DVector;

pub use integrator::{hermite, DenseNode, IntegratorConfig, IntegratorStats};
pub(crate) use trace::write_row;
pub use trace::{fmt_f64, FlowKind, PathTrace, TracePoint};

use crate::calculus;
use crate::error::{Error, Result};
use crate::model::{self, damped_action, newton_action, InverseOperator, Problem};
use crate::spectral::KappaEstimate;

/// Direction of the time change `w(t) = 1 − e^{−t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMap {
    /// `t ↦ 1 − e^{−t}`, for `t ≥ 0`.
    Forward,
    /// `t ↦ ln(1/(1−t))`, for `t ∈ [0, 1)`.
    Inverse,
}

pub fn reparametrize_time(t: f64, direction: TimeMap) -> Result<f64> {
    match direction {
        TimeMap::Forward => {
            if !(t >= 0.0) {
                return Err(Error::Domain {
                    t,
                    reason: "forward map needs t >= 0",
                });
            }
            Ok(-(-t).exp_m1())
        }
        TimeMap::Inverse => {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::Domain {
                    t,
                    reason: "inverse map needs t in [0, 1)",
                });
            }
            Ok(-(-t).ln_1p())
        }
    }
}

fn checkpoint_grid(t_end: f64, count: usize) -> Vec<f64> {
    if t_end == 0.0 {
        return vec![0.0];
    }
    let last = count - 1;
    (0..count)
        .map(|i| {
            if i == last {
                t_end
            } else {
                t_end * i as f64 / last as f64
            }
        })
        .collect()
}

/// `−F′(x)⁻¹v`, with the opt-in damped least-squares fallback.
fn newton_direction(
    problem: &Problem,
    cfg: &IntegratorConfig,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let j = calculus::jacobian(problem, x)?;
    match newton_action(&j, x, v) {
        Err(Error::SingularJacobian { .. }) if cfg.damping_fallback.is_some() => {
            damped_action(&j, v, cfg.damping_fallback.unwrap_or_default())
        }
        other => other,
    }
}

fn require_square(problem: &Problem) -> Result<()> {
    if problem.input_dim() != problem.output_dim() {
        return Err(Error::DimensionMismatch {
            context: format!("Newton-type flow on `{}` requires n = m", problem.name()),
            expected: problem.input_dim(),
            found: problem.output_dim(),
        });
    }
    Ok(())
}

/// Shared driver: integrates `rhs`, evaluates each checkpoint with `measure`
/// (returning `(defect, bound)`), and applies the ball policy.
fn run_follower<R, M>(
    problem: &Problem,
    kind: FlowKind,
    kappa_used: KappaEstimate,
    t_end: f64,
    cfg: &IntegratorConfig,
    rhs: R,
    measure: M,
) -> Result<PathTrace>
where
    R: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
    M: Fn(f64, &DVector<f64>, &DVector<f64>) -> Result<(f64, f64)>,
{
    cfg.validate()?;
    let grid = checkpoint_grid(t_end, cfg.checkpoint_count);
    let mut points = Vec::with_capacity(grid.len());
    let mut exited_ball = false;

    let integration = integrator::integrate(
        |t, x| rhs(t, x).map_err(|e| e.at(t)),
        0.0,
        problem.x0(),
        &grid,
        cfg,
        |t, x| {
            let eval = problem.evaluate_flagged(x)?;
            if eval.outside_ball {
                exited_ball = true;
                if cfg.strict_ball {
                    return Err(Error::BallExit {
                        t,
                        distance: problem.distance_from_center(x),
                        radius: problem.radius(),
                    });
                }
            }
            let (defect, bound) = measure(t, x, &eval.value)?;
            points.push(TracePoint {
                t,
                x: x.clone(),
                norm_f: eval.value.norm(),
                residual: eval.value,
                defect,
                bound,
                outside_ball: eval.outside_ball,
            });
            Ok(())
        },
    )?;

    let terminal = points
        .last()
        .map(|p| p.x.clone())
        .unwrap_or_else(|| problem.x0().clone());
    Ok(PathTrace {
        kind,
        points,
        kappa_used,
        stats: integration.stats,
        exited_ball,
        terminal,
        dense: integration.nodes,
    })
}

/// Integrates `ẋ = −F′(x)⁻¹F(x₀)` over `[0, 1]`. Along the exact path
/// `F(x(t)) = (1−t)F(x₀)`, so every checkpoint defect is pure integration error.
pub fn follow_davidenko(problem: &Problem, cfg: &IntegratorConfig) -> Result<PathTrace> {
    follow_davidenko_until(problem, cfg, 1.0)
}

/// [`follow_davidenko`] stopped at `t_end ∈ [0, 1]`.
pub fn follow_davidenko_until(problem: &Problem, cfg: &IntegratorConfig, t_end: f64) -> Result<PathTrace> {
    require_square(problem)?;
    if !(0.0..=1.0).contains(&t_end) {
        return Err(Error::InvalidArgument(format!(
            "Davidenko end time {t_end} outside [0, 1]"
        )));
    }
    let f0 = problem.initial_residual()?;
    run_follower(
        problem,
        FlowKind::Davidenko,
        KappaEstimate::closed_form(0.0)?,
        t_end,
        cfg,
        |_, x| newton_direction(problem, cfg, x, &f0),
        |t, _, fx| Ok(((fx - &f0 * (1.0 - t)).norm(), 0.0)),
    )
}

/// Integrates `ẋ = M(x)F(x₀)` over `[0, 1]`, recording the defect
/// `‖F(x(t)) − (1−t)F(x₀)‖` against `κ̂·t·‖F(x₀)‖`.
pub fn follow_generalized(
    problem: &Problem,
    op: &InverseOperator,
    kappa: &KappaEstimate,
    cfg: &IntegratorConfig,
) -> Result<PathTrace> {
    op.conforms_to(problem)?;
    let f0 = problem.initial_residual()?;
    run_follower(
        problem,
        FlowKind::Generalized,
        kappa.clone(),
        1.0,
        cfg,
        |_, x| op.apply_to(x, &f0),
        |t, x, _| {
            let d = model::homotopy_defect_with(problem, &f0, x, t, kappa.value)?;
            Ok((d.defect, d.bound))
        },
    )
}

/// Integrates `ż = −F′(z)⁻¹F(z)` over `[0, horizon]`. The defect column holds
/// `|‖F(z(t))‖ − e^{−t}‖F(x₀)‖|`.
pub fn follow_continuous_newton(problem: &Problem, horizon: f64, cfg: &IntegratorConfig) -> Result<PathTrace> {
    require_square(problem)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    let f0_norm = problem.initial_residual()?.norm();
    run_follower(
        problem,
        FlowKind::ContinuousNewton,
        KappaEstimate::closed_form(0.0)?,
        horizon,
        cfg,
        |_, z| {
            let fz = problem.evaluate(z)?;
            newton_direction(problem, cfg, z, &fz)
        },
        |t, _, fz| Ok(((fz.norm() - (-t).exp() * f0_norm).abs(), 0.0)),
    )
}

/// `max ‖z(t) − x(w(t))‖` over the continuous-Newton checkpoints on `[0, horizon]`,
/// with `x` taken from the Davidenko dense output.
pub fn bridge_check(problem: &Problem, horizon: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let newton = follow_continuous_newton(problem, horizon, cfg)?;
    if horizon == 0.0 {
        return Ok(0.0);
    }
    let w_end = reparametrize_time(horizon, TimeMap::Forward)?;
    let davidenko = follow_davidenko_until(problem, cfg, w_end)?;
    let mut worst = 0.0_f64;
    for p in &newton.points {
        // guard the last node against w(T) rounding past the dense range
        let s = reparametrize_time(p.t, TimeMap::Forward)?.min(w_end);
        let x = davidenko
            .interpolate(s)
            .ok_or_else(|| Error::InvalidArgument(format!("no dense output at s = {s}")))?;
        worst = worst.max((&p.x - x).norm());
    }
    Ok(worst)
}
