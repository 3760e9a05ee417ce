//! Piecewise-linear paths on dyadic partitions of `[0, 1]`.
//!
//! At level `k` the nodes are `tᵢ = i/2ᵏ`. Each node value `wᵢ` is reached from
//! `wᵢ₋₁` along `h = M(wᵢ₋₁)F(x₀)` (clipped to `‖h‖ ≤ r`) and accepted only if
//!
//! ```text
//! ‖F(wᵢ) − F(wᵢ₋₁) + sᵢF(x₀)‖ ≤ sᵢε + sᵢκ‖F(x₀)‖,   ε = 1/k.
//! ```
//!
//! A rejected step is bisected; the two halves are tested separately and their
//! inequalities add up to the one for the whole step. Summing over nodes gives
//! the cumulative bound `‖F(w_j) − (1−t_j)F(x₀)‖ ≤ t_jε + t_jκ‖F(x₀)‖`, which
//! [`verify_path`] re-checks from scratch together with the Lipschitz bound `r`
//! and containment in `B_{r·t}(x₀)`.

use std::io::{self, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::write_row;
use crate::model::{InverseOperator, Problem};
use crate::spectral::KappaEstimate;

/// Bisection depth at which a step is declared infeasible.
/// Finest supported partition level (`2²⁴` steps).
pub const MAX_LEVEL: u32 = 24;
pub const MAX_BISECTION_DEPTH: u32 = 40;
/// Total sub-step budget for one path.
pub const MAX_SUBSTEPS: usize = 1 << 20;
/// Absolute slack on the Lipschitz and containment checks.
pub const GEOMETRY_SLACK: f64 = 1e-12;
/// Pairs of times sampled by the Lipschitz check.
pub const LIPSCHITZ_PAIRS: usize = 100;
const LIPSCHITZ_SEED: u64 = 0x5eed_0001;

/// `ε_k = max(1/k, 1e−12)`.
pub fn epsilon_for_level(k: u32) -> f64 {
    (1.0 / k as f64).max(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptRecord {
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub substeps: usize,
    /// Whether any sub-step had its direction shortened to length `r`.
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct PartitionPath {
    pub level: u32,
    pub nodes: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    /// `F` at each node, as computed during construction.
    pub residuals: Vec<DVector<f64>>,
    /// `sᵢ = tᵢ − tᵢ₋₁` for `i = 1..=2ᵏ`.
    pub steps: Vec<f64>,
    pub epsilon: f64,
    pub accept_records: Vec<AcceptRecord>,
    pub kappa_used: KappaEstimate,
    pub x0: DVector<f64>,
    pub f0: DVector<f64>,
    pub radius: f64,
    /// `max_t ‖x_k(t) − x_{k−1}(t)‖` when built by [`refine`].
    pub refinement_distance: Option<f64>,
}

/// Serializable acceptance log written next to the path CSV.
#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceLog<'a> {
    pub level: u32,
    pub epsilon: f64,
    pub kappa: &'a KappaEstimate,
    pub initial_residual_norm: f64,
    pub refinement_distance: Option<f64>,
    pub records: &'a [AcceptRecord],
}

impl PartitionPath {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.values.last().expect("at least two nodes")
    }

    /// `t·ε + t·κ·‖F(x₀)‖`.
    pub fn cumulative_bound(&self, t: f64) -> f64 {
        t * self.epsilon + self.kappa_used.value * t * self.f0.norm()
    }

    /// The piecewise-linear interpolant at `t ∈ [0, 1]`.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let t = t.clamp(0.0, 1.0);
        let last = self.nodes.len() - 1;
        let i = self.nodes.partition_point(|&n| n <= t).clamp(1, last);
        let (a, b) = (self.nodes[i - 1], self.nodes[i]);
        let lambda = (t - a) / (b - a);
        &self.values[i - 1] * (1.0 - lambda) + &self.values[i] * lambda
    }

    pub fn acceptance_log(&self) -> AcceptanceLog<'_> {
        AcceptanceLog {
            level: self.level,
            epsilon: self.epsilon,
            kappa: &self.kappa_used,
            initial_residual_norm: self.f0.norm(),
            refinement_distance: self.refinement_distance,
            records: &self.accept_records,
        }
    }

    /// Same schema as a flow trace; `defect` and `bound` are the cumulative pair.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.x0.len();
        let m = self.f0.len();
        writeln!(w, "{}", crate::flow::PathTrace::csv_header(n, m))?;
        for ((t, x), fx) in self.nodes.iter().zip(&self.values).zip(&self.residuals) {
            let defect = (fx - &self.f0 * (1.0 - t)).norm();
            let outside = (x - &self.x0).norm() > self.radius + crate::model::BALL_SLACK * self.radius.max(1.0);
            write_row(&mut w, *t, x, fx, fx.norm(), defect, self.cumulative_bound(*t), outside)?;
        }
        Ok(())
    }
}

struct StepContext<'a> {
    problem: &'a Problem,
    op: &'a InverseOperator,
    f0: &'a DVector<f64>,
    epsilon: f64,
    kappa: f64,
    node: usize,
    budget: usize,
}

struct Advance {
    w: DVector<f64>,
    fw: DVector<f64>,
    leaves: usize,
    clipped: bool,
}

impl StepContext<'_> {
    fn rhs(&self, s: f64) -> f64 {
        s * self.epsilon + s * self.kappa * self.f0.norm()
    }

    fn advance(&mut self, y: &DVector<f64>, fy: &DVector<f64>, s: f64, depth: u32) -> Result<Advance> {
        let mut h = self.op.apply_to(y, self.f0)?;
        let r = self.problem.radius();
        let hn = h.norm();
        let clipped = hn > r;
        if clipped {
            h *= r / hn;
        }
        let w = y + &h * s;
        let fw = self.problem.evaluate(&w)?;
        let lhs = (&fw - fy + self.f0 * s).norm();
        let rhs = self.rhs(s);
        if lhs <= rhs {
            self.budget = self.budget.saturating_sub(1);
            return Ok(Advance {
                w,
                fw,
                leaves: 1,
                clipped,
            });
        }
        if depth >= MAX_BISECTION_DEPTH || self.budget == 0 {
            return Err(Error::AcceptanceInfeasible {
                node: self.node,
                y: y.as_slice().to_vec(),
                lhs,
                rhs,
            });
        }
        let half = 0.5 * s;
        let first = self.advance(y, fy, half, depth + 1)?;
        let second = self.advance(&first.w, &first.fw, half, depth + 1)?;
        Ok(Advance {
            w: second.w,
            fw: second.fw,
            leaves: first.leaves + second.leaves,
            clipped: first.clipped || second.clipped || clipped,
        })
    }
}

/// Builds the level-`k` path from `x₀`.
pub fn build_path(problem: &Problem, op: &InverseOperator, k: u32, kappa: &KappaEstimate) -> Result<PartitionPath> {
    if k == 0 {
        return Err(Error::InvalidArgument("partition level must be >= 1".into()));
    }
    if k > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "partition level {k} is too fine (max {MAX_LEVEL})"
        )));
    }
    op.conforms_to(problem)?;
    let count = 1usize << k;
    let x0 = problem.x0().clone();
    let f0 = problem.initial_residual()?;
    let epsilon = epsilon_for_level(k);
    let nodes: Vec<f64> = (0..=count).map(|i| i as f64 / count as f64).collect();
    let steps: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();

    let mut ctx = StepContext {
        problem,
        op,
        f0: &f0,
        epsilon,
        kappa: kappa.value,
        node: 0,
        budget: MAX_SUBSTEPS,
    };
    let mut values = Vec::with_capacity(count + 1);
    let mut residuals = Vec::with_capacity(count + 1);
    let mut records = Vec::with_capacity(count);
    values.push(x0.clone());
    residuals.push(f0.clone());

    for (i, &s) in steps.iter().enumerate() {
        ctx.node = i + 1;
        let (y, fy) = (&values[i], &residuals[i]);
        let adv = ctx.advance(y, fy, s, 0).map_err(|e| e.at(nodes[i]))?;
        let lhs = (&adv.fw - fy + &f0 * s).norm();
        records.push(AcceptRecord {
            node: i + 1,
            lhs,
            rhs: ctx.rhs(s),
            substeps: adv.leaves,
            clipped: adv.clipped,
        });
        values.push(adv.w);
        residuals.push(adv.fw);
    }

    Ok(PartitionPath {
        level: k,
        nodes,
        values,
        residuals,
        steps,
        epsilon,
        accept_records: records,
        kappa_used: kappa.clone(),
        x0,
        f0,
        radius: problem.radius(),
        refinement_distance: None,
    })
}

/// Builds level `k + 1` and records its uniform distance to `path`.
pub fn refine(
    problem: &Problem,
    op: &InverseOperator,
    path: &PartitionPath,
    kappa: &KappaEstimate,
) -> Result<PartitionPath> {
    if path.x0 != *problem.x0() {
        return Err(Error::InvalidArgument(
            "path was built from a different initial point".into(),
        ));
    }
    let mut finer = build_path(problem, op, path.level + 1, kappa)?;
    // both interpolants are linear between fine nodes, so the gap peaks on them
    let distance = finer
        .nodes
        .iter()
        .zip(&finer.values)
        .map(|(t, x)| (x - path.interpolate(*t)).norm())
        .fold(0.0, f64::max);
    finer.refinement_distance = Some(distance);
    Ok(finer)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCheck {
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeCheck {
    pub t: f64,
    pub defect: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    /// `max(0, maxᵢ(lhsᵢ − rhsᵢ))` over re-evaluated steps.
    pub max_step_violation: f64,
    pub step_checks: Vec<StepCheck>,
    pub cumulative_defects: Vec<CumulativeCheck>,
    pub cumulative_ok: bool,
    pub lipschitz_ok: bool,
    /// `max(‖x(t) − x(s)‖ − r|t − s|)` over checked pairs.
    pub max_lipschitz_excess: f64,
    pub lipschitz_pairs: usize,
    pub containment_ok: bool,
    pub evaluation_failures: usize,
}

impl PathReport {
    pub fn steps_ok(&self) -> bool {
        self.max_step_violation == 0.0 && self.evaluation_failures == 0
    }

    pub fn passed(&self) -> bool {
        self.steps_ok() && self.cumulative_ok && self.lipschitz_ok && self.containment_ok
    }
}

/// Re-evaluates `F` at every node and re-checks all certificates of `path`.
pub fn verify_path(problem: &Problem, path: &PartitionPath) -> PathReport {
    let f0 = &path.f0;
    let f0_norm = f0.norm();
    let kappa = path.kappa_used.value;
    let r = path.radius;

    let mut failures = 0;
    let residuals: Vec<Option<DVector<f64>>> = path
        .values
        .iter()
        .map(|x| match problem.evaluate(x) {
            Ok(v) => Some(v),
            Err(_) => {
                failures += 1;
                None
            }
        })
        .collect();

    let mut step_checks = Vec::with_capacity(path.steps.len());
    let mut max_violation = 0.0_f64;
    for (i, &s) in path.steps.iter().enumerate() {
        let rhs = s * path.epsilon + s * kappa * f0_norm;
        let lhs = match (&residuals[i], &residuals[i + 1]) {
            (Some(a), Some(b)) => (b - a + f0 * s).norm(),
            _ => f64::INFINITY,
        };
        max_violation = max_violation.max(lhs - rhs);
        step_checks.push(StepCheck { node: i + 1, lhs, rhs });
    }

    let mut cumulative = Vec::with_capacity(path.nodes.len());
    let mut cumulative_ok = failures == 0;
    for (t, fx) in path.nodes.iter().zip(&residuals) {
        let bound = path.cumulative_bound(*t);
        let defect = fx.as_ref().map_or(f64::INFINITY, |fx| (fx - f0 * (1.0 - t)).norm());
        cumulative_ok &= defect <= bound;
        cumulative.push(CumulativeCheck { t: *t, defect, bound });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(LIPSCHITZ_SEED);
    let mut pairs: Vec<(f64, f64)> = (0..LIPSCHITZ_PAIRS).map(|_| (rng.random(), rng.random())).collect();
    pairs.extend(path.nodes.windows(2).map(|w| (w[0], w[1])));
    let mut lipschitz_excess = f64::NEG_INFINITY;
    for &(s, t) in &pairs {
        let gap = (path.interpolate(t) - path.interpolate(s)).norm();
        lipschitz_excess = lipschitz_excess.max(gap - r * (t - s).abs());
    }

    let containment_ok = path.values[0] == path.x0
        && path
            .nodes
            .iter()
            .zip(&path.values)
            .all(|(t, x)| (x - &path.x0).norm() <= r * t + GEOMETRY_SLACK);

    PathReport {
        max_step_violation: max_violation.max(0.0),
        step_checks,
        cumulative_defects: cumulative,
        cumulative_ok,
        lipschitz_ok: lipschitz_excess <= GEOMETRY_SLACK,
        max_lipschitz_excess: lipschitz_excess,
        lipschitz_pairs: pairs.len(),
        containment_ok,
        evaluation_failures: failures,
    }
}
