//! Operator norms and sampled estimates of `κ = sup ‖A(x) + I‖` over the trust ball,
//! where `A(x) = F′(x)·M(x)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus;
use crate::error::{check_finite_mat, Error, Result};
use crate::model::{InverseOperator, Problem};
use crate::sampling::BallSampler;

/// Relative tolerance used for κ evaluations.
pub const NORM_TOL: f64 = 1e-10;
/// Iteration cap for power iteration.
pub const POWER_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethod {
    SampledBall,
    TrajectoryPoints,
    ClosedForm,
}

impl fmt::Display for KappaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KappaMethod::SampledBall => "sampled_ball",
            KappaMethod::TrajectoryPoints => "trajectory_points",
            KappaMethod::ClosedForm => "closed_form",
        })
    }
}

/// An estimate `κ̂` with the evidence it was drawn from.
///
/// Sampled estimates are maxima over finitely many points and therefore only
/// lower bounds on the supremum; `lower_bound_only` says so.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub value: f64,
    pub method: KappaMethod,
    pub sample_count: usize,
    pub failed_samples: usize,
    pub argmax_point: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub lower_bound_only: bool,
}

impl KappaEstimate {
    /// A κ known analytically for the problem/operator pair.
    pub fn closed_form(value: f64) -> Result<Self> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "closed-form kappa must be >= 0, got {value}"
            )));
        }
        Ok(Self {
            value,
            method: KappaMethod::ClosedForm,
            sample_count: 0,
            failed_samples: 0,
            argmax_point: None,
            seed: None,
            lower_bound_only: false,
        })
    }

    pub fn is_closed_form(&self) -> bool {
        self.method == KappaMethod::ClosedForm
    }
}

/// `x ↦ A(x) = F′(x)·M(x) ∈ R^{m×m}`.
#[derive(Debug, Clone)]
pub struct ResidualOperator {
    problem: Problem,
    op: InverseOperator,
}

impl ResidualOperator {
    pub fn at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = calculus::jacobian(&self.problem, x)?;
        let m = self.op.apply(x)?;
        Ok(j * m)
    }

    /// `‖A(x) + I‖₂`.
    pub fn distance_from_minus_identity(&self, x: &DVector<f64>) -> Result<f64> {
        let a = self.at(x)?;
        let m = a.nrows();
        operator_norm(&(a + DMatrix::identity(m, m)), NORM_TOL)
    }
}

pub fn residual_operator(problem: &Problem, op: &InverseOperator) -> Result<ResidualOperator> {
    op.conforms_to(problem)?;
    Ok(ResidualOperator {
        problem: problem.clone(),
        op: op.clone(),
    })
}

/// Largest singular value. Dense SVD when the smaller dimension is at most 3,
/// power iteration on `matᵀ·mat` from the normalized all-ones vector otherwise.
pub fn operator_norm(mat: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("norm tolerance must be > 0, got {tol}")));
    }
    check_finite_mat(mat, "operator_norm input")?;
    if mat.is_empty() {
        return Ok(0.0);
    }
    if mat.nrows().min(mat.ncols()) <= 3 {
        let sv = mat.clone().svd(false, false).singular_values;
        return Ok(sv.iter().cloned().fold(0.0, f64::max));
    }
    Ok(power_iteration_norm(mat, tol, POWER_MAX_ITERS))
}

pub(crate) fn power_iteration_norm(mat: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let n = mat.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    if (mat * &v).norm() == 0.0 {
        // all-ones lies in the kernel; restart from the heaviest column
        let (j, norm) = mat
            .column_iter()
            .map(|c| c.norm())
            .enumerate()
            .fold((0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
        if norm == 0.0 {
            return 0.0;
        }
        v = DVector::zeros(n);
        v[j] = 1.0;
    }
    let mut sigma_sq = (mat * &v).norm_squared();
    for _ in 0..max_iters {
        let w = mat.tr_mul(&(mat * &v));
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
        let next = (mat * &v).norm_squared();
        let converged = (next - sigma_sq).abs() <= tol * next;
        sigma_sq = next;
        if converged {
            break;
        }
    }
    sigma_sq.sqrt()
}

/// `max ‖A(x) + I‖` over `x₀` and `samples` seeded points of the closed ball.
pub fn estimate_kappa(problem: &Problem, op: &InverseOperator, samples: usize, seed: u64) -> Result<KappaEstimate> {
    estimate_kappa_with_points(problem, op, samples, seed, &[])
}

/// As [`estimate_kappa`], additionally maximizing over `trace_points`.
pub fn estimate_kappa_with_points(
    problem: &Problem,
    op: &InverseOperator,
    samples: usize,
    seed: u64,
    trace_points: &[DVector<f64>],
) -> Result<KappaEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "kappa estimation needs at least one sample".into(),
        ));
    }
    let residual = residual_operator(problem, op)?;
    let sampler = BallSampler::new(problem.x0().clone(), problem.radius(), seed);
    let mut points = Vec::with_capacity(1 + samples + trace_points.len());
    points.push(problem.x0().clone());
    points.extend(sampler.take(samples));
    points.extend(trace_points.iter().cloned());

    let mut best: Option<(f64, &DVector<f64>)> = None;
    let mut failures = 0;
    for p in &points {
        match residual.distance_from_minus_identity(p) {
            Ok(v) => {
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, p));
                }
            }
            Err(_) => failures += 1,
        }
    }
    let (value, argmax) = best.ok_or(Error::AllSamplesFailed { failures })?;
    Ok(KappaEstimate {
        value,
        method: if trace_points.is_empty() {
            KappaMethod::SampledBall
        } else {
            KappaMethod::TrajectoryPoints
        },
        sample_count: points.len(),
        failed_samples: failures,
        argmax_point: Some(argmax.as_slice().to_vec()),
        seed: Some(seed),
        lower_bound_only: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::corpus;
    use approx::assert_relative_eq;

    fn x(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn norm_examples() {
        assert_relative_eq!(
            operator_norm(&DMatrix::identity(2, 2), 1e-10).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.1]));
        assert_relative_eq!(operator_norm(&d, 1e-10).unwrap(), 0.1, epsilon = 1e-15);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_relative_eq!(operator_norm(&nil, 1e-10).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_errors() {
        let bad = DMatrix::from_element(2, 2, f64::INFINITY);
        assert!(matches!(operator_norm(&bad, 1e-10), Err(Error::NonFinite { .. })));
        assert!(operator_norm(&DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn power_iteration_handles_kernel_start_vector() {
        // columns sum to zero, so the all-ones start is annihilated
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 0)] = 2.0;
        a[(0, 1)] = -2.0;
        a[(1, 2)] = 0.5;
        a[(1, 3)] = -0.5;
        let got = operator_norm(&a, 1e-12).unwrap();
        assert_relative_eq!(got, 8f64.sqrt(), epsilon = 1e-10);
        assert_eq!(operator_norm(&DMatrix::zeros(5, 5), 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn power_iteration_agrees_with_svd_on_larger_matrices() {
        let a = DMatrix::from_fn(6, 6, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 3.0 } else { 0.0 }
        });
        let svd_max = a.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(operator_norm(&a, 1e-12).unwrap(), svd_max, max_relative = 1e-9);
    }

    #[test]
    fn residual_operator_examples() {
        let q = corpus::quadratic();
        let newton = residual_operator(&q, &InverseOperator::exact_newton(&q).unwrap()).unwrap();
        for v in [0.6, 1.0, 1.4, -3.0] {
            assert_relative_eq!(newton.at(&x(v)).unwrap()[(0, 0)], -1.0, epsilon = 1e-15);
        }
        let frozen = residual_operator(&q, &InverseOperator::frozen_scalar(&q, -0.5).unwrap()).unwrap();
        assert_relative_eq!(frozen.at(&x(1.2)).unwrap()[(0, 0)], -1.2, epsilon = 1e-15);
        let zero = InverseOperator::constant(2, 2, DMatrix::zeros(2, 2)).unwrap();
        let sys = corpus::system2d();
        let a = residual_operator(&sys, &zero)
            .unwrap()
            .at(&DVector::from_vec(vec![1.0, 3.0]))
            .unwrap();
        assert_eq!(a, DMatrix::zeros(2, 2));
    }

    #[test]
    fn residual_operator_checks_shape() {
        let q = corpus::quadratic();
        let wrong = InverseOperator::constant(2, 2, DMatrix::zeros(2, 2)).unwrap();
        assert!(residual_operator(&q, &wrong).is_err());
    }

    #[test]
    fn kappa_examples() {
        let q = corpus::quadratic();
        let k = estimate_kappa(&q, &InverseOperator::exact_newton(&q).unwrap(), 200, 0).unwrap();
        assert!(k.value <= 1e-10);
        assert!(k.lower_bound_only);

        let k = estimate_kappa(&q, &InverseOperator::frozen_scalar(&q, -0.5).unwrap(), 200, 0).unwrap();
        assert!((0.49..=0.5).contains(&k.value), "{k:?}");
        let arg = k.argmax_point.as_ref().unwrap()[0];
        assert_relative_eq!((1.0 - arg).abs(), k.value, epsilon = 1e-12);

        let lin = corpus::linear();
        let k = estimate_kappa(&lin, &InverseOperator::frozen_scalar(&lin, -0.5).unwrap(), 50, 3).unwrap();
        assert_relative_eq!(k.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kappa_skips_failed_points() {
        // exact Newton on the trap fails only where F′ vanishes; sampling x₀ = 0 exactly
        let trap = corpus::trap().recentered(x(0.0)).unwrap();
        let op = InverseOperator::exact_newton(&trap).unwrap();
        let k = estimate_kappa(&trap, &op, 20, 1).unwrap();
        assert_eq!(k.failed_samples, 1);
        assert!(k.value < 1e-10);

        let always = InverseOperator::custom(1, 1, vec![], |_| Err(Error::InvalidArgument("no".into())));
        assert!(matches!(
            estimate_kappa(&trap, &always, 5, 1),
            Err(Error::AllSamplesFailed { failures: 6 })
        ));
        assert!(estimate_kappa(&trap, &op, 0, 1).is_err());
    }

    #[test]
    fn trajectory_points_switch_method() {
        let q = corpus::quadratic();
        let op = InverseOperator::frozen_scalar(&q, -0.5).unwrap();
        let k = estimate_kappa_with_points(&q, &op, 1, 0, &[x(1.5)]).unwrap();
        assert_eq!(k.method, KappaMethod::TrajectoryPoints);
        assert_relative_eq!(k.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_validation() {
        assert!(KappaEstimate::closed_form(-0.1).is_err());
        let k = KappaEstimate::closed_form(0.5).unwrap();
        assert!(!k.lower_bound_only && k.is_closed_form());
    }
}
