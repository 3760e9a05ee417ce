//! Unit-time restarts for geometric residual contraction, and the approximate
//! inverse solver for `Ψ(u) ≈ g`.

use nalgebra::DVector;
use serde::{Serialize, Serializer};

use crate::error::Result;
use crate::flow::{self, IntegratorConfig};
use crate::model::{InverseOperator, InverseProblem, Problem};
use crate::spectral::{self, KappaEstimate};

/// Iterates farther than this multiple of `max(1, ‖u₀‖)` from `u₀` count as unbounded.
pub const BOUNDEDNESS_FACTOR: f64 = 1e6;
/// Multiple of `abs_tol` allowed on top of a certified bound.
pub const CERTIFICATION_SLACK_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceMet,
    MaxIterations,
    DivergenceDetected,
    FollowerFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KappaPolicy {
    /// The same analytic `κ` at every restart.
    ClosedForm(f64),
    /// A fresh sampled estimate over each restart's ball; restart `i` uses `seed + i`.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOptions {
    /// Re-anchor frozen Jacobians at every restart center.
    pub refresh_operator: bool,
    pub kappa: KappaPolicy,
}

impl Default for RestartOptions {
    fn default() -> Self {
        Self {
            refresh_operator: false,
            kappa: KappaPolicy::Sampled { samples: 200, seed: 0 },
        }
    }
}

fn ser_vectors<S: Serializer>(v: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.as_slice()))
}

fn ser_vector<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartSequence {
    #[serde(serialize_with = "ser_vectors")]
    pub iterates: Vec<DVector<f64>>,
    pub residual_norms: Vec<f64>,
    /// `∏_{j<i} κ̂_j · ‖F(u₀)‖`, i.e. `κ̂ⁱ‖F(u₀)‖` for a constant `κ̂`.
    pub bounds: Vec<f64>,
    pub kappas: Vec<KappaEstimate>,
    pub stopped_reason: StopReason,
    pub failure: Option<String>,
}

impl RestartSequence {
    pub fn restarts(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_norms.last().expect("u_0 is always recorded")
    }
}

pub fn iterate_restarts(
    problem: &Problem,
    op: &InverseOperator,
    max_iters: usize,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<RestartSequence> {
    iterate_restarts_with(problem, op, max_iters, tol, cfg, &RestartOptions::default())
}

/// Runs the generalized flow for unit time from `u_i`, re-centering the problem at
/// each terminal point, until the residual drops below `tol`, `max_iters` restarts
/// have run, or divergence is detected (two consecutive residual increases with
/// `κ̂ ≥ 1`, or iterates leaving every reasonable bound).
pub fn iterate_restarts_with(
    problem: &Problem,
    op: &InverseOperator,
    max_iters: usize,
    tol: f64,
    cfg: &IntegratorConfig,
    opts: &RestartOptions,
) -> Result<RestartSequence> {
    if max_iters == 0 {
        return Err(crate::Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(crate::Error::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    cfg.validate()?;
    op.conforms_to(problem)?;

    let u0 = problem.x0().clone();
    let r0 = problem.initial_residual()?.norm();
    let mut seq = RestartSequence {
        iterates: vec![u0.clone()],
        residual_norms: vec![r0],
        bounds: vec![r0],
        kappas: Vec::new(),
        stopped_reason: StopReason::MaxIterations,
        failure: None,
    };
    if r0 <= tol {
        seq.stopped_reason = StopReason::ToleranceMet;
        return Ok(seq);
    }

    let escape = BOUNDEDNESS_FACTOR * u0.norm().max(1.0);
    let mut current_op = op.clone();
    let mut increases = 0;
    let mut product = 1.0;

    for i in 0..max_iters {
        let u = seq.iterates.last().expect("non-empty").clone();
        let step = (|| -> Result<(KappaEstimate, DVector<f64>)> {
            let centered = problem.recentered(u)?;
            if opts.refresh_operator {
                current_op = op.refreshed_for(&centered)?;
            }
            let kappa = match opts.kappa {
                KappaPolicy::ClosedForm(v) => KappaEstimate::closed_form(v)?,
                KappaPolicy::Sampled { samples, seed } => {
                    spectral::estimate_kappa(&centered, &current_op, samples, seed.wrapping_add(i as u64))?
                }
            };
            let trace = flow::follow_generalized(&centered, &current_op, &kappa, cfg)?;
            Ok((kappa, trace.terminal))
        })();

        let (kappa, next) = match step {
            Ok(v) => v,
            Err(e) => {
                seq.stopped_reason = StopReason::FollowerFailure;
                seq.failure = Some(e.to_string());
                return Ok(seq);
            }
        };
        let norm = match problem.evaluate(&next) {
            Ok(f) => f.norm(),
            Err(e) => {
                seq.stopped_reason = StopReason::FollowerFailure;
                seq.failure = Some(e.to_string());
                return Ok(seq);
            }
        };
        let prev = *seq.residual_norms.last().expect("non-empty");
        product *= kappa.value;
        let kappa_value = kappa.value;
        let escaped = (&next - &u0).norm() > escape;

        seq.iterates.push(next);
        seq.residual_norms.push(norm);
        seq.bounds.push(product * r0);
        seq.kappas.push(kappa);

        if norm <= tol {
            seq.stopped_reason = StopReason::ToleranceMet;
            return Ok(seq);
        }
        increases = if norm > prev { increases + 1 } else { 0 };
        if (increases >= 2 && kappa_value >= 1.0) || escaped {
            seq.stopped_reason = StopReason::DivergenceDetected;
            return Ok(seq);
        }
    }
    Ok(seq)
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseSolution {
    #[serde(serialize_with = "ser_vector")]
    pub u: DVector<f64>,
    /// `‖Ψ(u) − g‖`.
    pub achieved: f64,
    /// `κ̂‖g‖`.
    pub bound: f64,
    pub slack: f64,
    pub kappa: KappaEstimate,
    /// `achieved ≤ bound + slack`, reported only for closed-form `κ`.
    pub certified: Option<bool>,
    pub exited_ball: bool,
}

/// Follows `ẋ = M(x)F(x₀)` for `F = Ψ − g` from the origin.
pub fn solve_inverse(
    inv: &InverseProblem,
    op: &InverseOperator,
    cfg: &IntegratorConfig,
    kappa: &KappaEstimate,
) -> Result<InverseSolution> {
    let derived = inv.derived_problem();
    let trace = flow::follow_generalized(&derived, op, kappa, cfg)?;
    let u = trace.terminal.clone();
    let achieved = (inv.psi(&u) - inv.target()).norm();
    let bound = kappa.value * inv.target().norm();
    let slack = CERTIFICATION_SLACK_FACTOR * cfg.abs_tol;
    Ok(InverseSolution {
        u,
        achieved,
        bound,
        slack,
        kappa: kappa.clone(),
        certified: kappa.is_closed_form().then_some(achieved <= bound + slack),
        exited_ball: trace.exited_ball,
    })
}
