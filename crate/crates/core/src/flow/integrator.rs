//! Dormand–Prince 5(4) with error-per-step control, landing exactly on checkpoints.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    /// Cap on attempted steps (accepted plus rejected).
    pub max_steps: usize,
    /// Number of equally spaced output times, endpoints included.
    pub checkpoint_count: usize,
    /// Abort on leaving the trust ball instead of flagging it.
    pub strict_ball: bool,
    /// Opt-in damping `λ` for a least-squares direction when a square Jacobian is singular.
    pub damping_fallback: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            initial_step: 1e-3,
            max_steps: 100_000,
            checkpoint_count: 33,
            strict_ball: false,
            damping_fallback: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.abs_tol) || !positive(self.rel_tol) {
            return Err(Error::InvalidArgument("integrator tolerances must be > 0".into()));
        }
        if !positive(self.initial_step) {
            return Err(Error::InvalidArgument("initial step must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        if self.checkpoint_count < 2 {
            return Err(Error::InvalidArgument("checkpoint_count must be >= 2".into()));
        }
        if let Some(l) = self.damping_fallback {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument("damping fallback must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Same configuration with both tolerances scaled by `factor`.
    pub fn scaled_tolerances(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejections: usize,
    /// Largest scaled error norm among accepted steps (at most 1).
    pub max_error_estimate: f64,
}

/// State and derivative at an accepted step, for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNode {
    pub t: f64,
    pub x: DVector<f64>,
    pub dx: DVector<f64>,
}

pub(crate) struct Integration {
    pub nodes: Vec<DenseNode>,
    /// Indices into `nodes` of the requested checkpoint times, in order.
    #[allow(dead_code)]
    pub checkpoints: Vec<usize>,
    pub stats: IntegratorStats,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn combine(x: &DVector<f64>, h: f64, ks: &[&DVector<f64>], coeffs: &[f64]) -> DVector<f64> {
    let mut out = x.clone();
    for (k, c) in ks.iter().zip(coeffs) {
        if *c != 0.0 {
            out.axpy(h * c, k, 1.0);
        }
    }
    out
}

/// Integrates `ẋ = rhs(t, x)` from `(t0, x0)` through every time in `checkpoints`
/// (increasing, first equal to `t0`). `on_checkpoint` sees each checkpoint state
/// as soon as it is accepted and may abort the run.
pub(crate) fn integrate<R, C>(
    rhs: R,
    t0: f64,
    x0: &DVector<f64>,
    checkpoints: &[f64],
    cfg: &IntegratorConfig,
    mut on_checkpoint: C,
) -> Result<Integration>
where
    R: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
    C: FnMut(f64, &DVector<f64>) -> Result<()>,
{
    cfg.validate()?;
    debug_assert!(checkpoints.first().is_none_or(|c| *c == t0));

    let mut t = t0;
    let mut x = x0.clone();
    let mut k1 = rhs(t, &x)?;
    let mut nodes = vec![DenseNode {
        t,
        x: x.clone(),
        dx: k1.clone(),
    }];
    let mut checkpoint_idx = Vec::with_capacity(checkpoints.len());
    let mut stats = IntegratorStats::default();
    let mut attempts = 0usize;

    on_checkpoint(t, &x)?;
    checkpoint_idx.push(0);
    let mut next_cp = 1;
    let t_end = *checkpoints.last().unwrap_or(&t0);
    let mut h = cfg.initial_step.min((t_end - t0).max(0.0));
    let mut last_rejected = false;

    while next_cp < checkpoints.len() {
        let target = checkpoints[next_cp];
        if attempts >= cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                t,
                max_steps: cfg.max_steps,
            });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        // snap onto the checkpoint rather than leaving a sliver
        let hits = t + h >= target - 16.0 * f64::EPSILON * target.abs().max(1.0);
        let step = if hits { target - t } else { h };
        attempts += 1;

        let k2 = rhs(t + C[1] * step, &combine(&x, step, &[&k1], &A2))?;
        let k3 = rhs(t + C[2] * step, &combine(&x, step, &[&k1, &k2], &A3))?;
        let k4 = rhs(t + C[3] * step, &combine(&x, step, &[&k1, &k2, &k3], &A4))?;
        let k5 = rhs(t + C[4] * step, &combine(&x, step, &[&k1, &k2, &k3, &k4], &A5))?;
        let k6 = rhs(t + C[5] * step, &combine(&x, step, &[&k1, &k2, &k3, &k4, &k5], &A6))?;
        let x_new = combine(&x, step, &[&k1, &k2, &k3, &k4, &k5, &k6], &B5);
        let t_new = if hits { target } else { t + step };
        let k7 = rhs(t_new, &x_new)?;

        let err_vec = combine(&DVector::zeros(x.len()), step, &[&k1, &k2, &k3, &k4, &k5, &k6, &k7], &E);
        let dim = x.len().max(1) as f64;
        let err = (err_vec
            .iter()
            .zip(x.iter().zip(x_new.iter()))
            .map(|(e, (a, b))| {
                let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / dim)
            .sqrt();
        if !err.is_finite() {
            return Err(Error::NonFinite {
                context: format!("integrator error estimate at t = {t}"),
            });
        }

        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };

        if err <= 1.0 {
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(err);
            t = t_new;
            x = x_new;
            k1 = k7;
            nodes.push(DenseNode {
                t,
                x: x.clone(),
                dx: k1.clone(),
            });
            if hits {
                on_checkpoint(t, &x)?;
                checkpoint_idx.push(nodes.len() - 1);
                next_cp += 1;
            }
            // a snapped step says nothing about the natural step size
            let base = if hits { h.max(step) } else { step };
            h = base * if last_rejected { factor.min(1.0) } else { factor };
            last_rejected = false;
        } else {
            stats.rejections += 1;
            h = step * factor.min(1.0);
            last_rejected = true;
        }
    }

    Ok(Integration {
        nodes,
        checkpoints: checkpoint_idx,
        stats,
    })
}

/// Cubic Hermite interpolation through accepted steps.
pub fn hermite(nodes: &[DenseNode], t: f64) -> Option<DVector<f64>> {
    let first = nodes.first()?;
    let last = nodes.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = nodes.partition_point(|n| n.t <= t);
    if i == 0 {
        return Some(first.x.clone());
    }
    if i >= nodes.len() {
        return Some(last.x.clone());
    }
    let (a, b) = (&nodes[i - 1], &nodes[i]);
    let h = b.t - a.t;
    if h == 0.0 {
        return Some(a.x.clone());
    }
    let s = (t - a.t) / h;
    let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
    let h10 = s.powi(3) - 2.0 * s * s + s;
    let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
    let h11 = s.powi(3) - s * s;
    Some(&a.x * h00 + &a.dx * (h10 * h) + &b.x * h01 + &b.dx * (h11 * h))
}
