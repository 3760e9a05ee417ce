//! Problems, inverse operators, the built-in corpus and homotopy-defect evaluation.

pub mod corpus;
mod operator;
mod problem;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) use operator::{damped_action, newton_action};
pub use operator::{InverseOperator, OperatorFn, OperatorKind};
pub use problem::{Evaluation, InverseProblem, MatrixFn, Problem, VectorFn, BALL_SLACK, PSI_ORIGIN_TOL};

/// `‖F(x) − (1−t)F(x₀)‖` against the bound `κ̂·t·‖F(x₀)‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopyDefect {
    pub t: f64,
    pub defect: f64,
    pub bound: f64,
    pub outside_ball: bool,
}

impl HomotopyDefect {
    pub fn within(&self, slack: f64) -> bool {
        self.defect <= self.bound + slack
    }
}

pub fn homotopy_defect(problem: &Problem, x: &DVector<f64>, t: f64, kappa_hat: f64) -> Result<HomotopyDefect> {
    let f0 = problem.initial_residual()?;
    homotopy_defect_with(problem, &f0, x, t, kappa_hat)
}

/// As [`homotopy_defect`] with `F(x₀)` supplied by the caller.
pub fn homotopy_defect_with(
    problem: &Problem,
    f0: &DVector<f64>,
    x: &DVector<f64>,
    t: f64,
    kappa_hat: f64,
) -> Result<HomotopyDefect> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("homotopy time {t} outside [0, 1]")));
    }
    if !(kappa_hat >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa estimate {kappa_hat} is negative"
        )));
    }
    let eval = problem.evaluate_flagged(x)?;
    let defect = (eval.value - f0 * (1.0 - t)).norm();
    Ok(HomotopyDefect {
        t,
        defect,
        bound: kappa_hat * t * f0.norm(),
        outside_ball: eval.outside_ball,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn evaluate_examples() {
        let q = corpus::quadratic();
        assert_eq!(q.evaluate(&scalar(1.0)).unwrap()[0], -1.0);
        assert_eq!(q.evaluate(&scalar(1.5)).unwrap()[0], 0.25);
        let p = Problem::new("sum-prod", 2, DVector::zeros(2), 1.0, |v| {
            DVector::from_vec(vec![v[0] + v[1], v[0] * v[1]])
        })
        .unwrap();
        let fx = p.evaluate(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(fx.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn evaluate_errors() {
        let q = corpus::quadratic();
        assert!(matches!(
            q.evaluate(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let nan = Problem::new("nan", 1, scalar(0.0), 1.0, |x| scalar(x[0].ln())).unwrap();
        assert!(matches!(nan.evaluate(&scalar(-1.0)), Err(Error::NonFinite { .. })));
        let wrong = Problem::new("wrong", 2, scalar(0.0), 1.0, |x| x.clone()).unwrap();
        assert!(matches!(
            wrong.evaluate(&scalar(0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn problem_invariants_enforced() {
        assert!(Problem::new("r0", 1, scalar(0.0), 0.0, |x| x.clone()).is_err());
        assert!(Problem::new("m0", 0, scalar(0.0), 1.0, |x| x.clone()).is_err());
        assert!(Problem::new("n0", 1, DVector::zeros(0), 1.0, |x| x.clone()).is_err());
    }

    #[test]
    fn outside_ball_flag() {
        let q = corpus::quadratic();
        assert!(!q.evaluate_flagged(&scalar(1.5)).unwrap().outside_ball);
        assert!(q.evaluate_flagged(&scalar(1.6)).unwrap().outside_ball);
    }

    #[test]
    fn defect_examples() {
        let q = corpus::quadratic();
        let d = homotopy_defect(&q, &scalar(1.0), 0.0, 0.0).unwrap();
        assert_eq!(d.defect, 0.0);
        let d = homotopy_defect(&q, &scalar(1.5), 1.0, 0.5).unwrap();
        assert_relative_eq!(d.defect, 0.25);
        assert_relative_eq!(d.bound, 0.5);
        let d = homotopy_defect(&q, &scalar(1.5f64.sqrt()), 0.5, 0.0).unwrap();
        assert!(d.defect < 1e-15);
    }

    #[test]
    fn defect_rejects_bad_arguments() {
        let q = corpus::quadratic();
        assert!(homotopy_defect(&q, &scalar(1.0), 1.5, 0.0).is_err());
        assert!(homotopy_defect(&q, &scalar(1.0), 0.5, -1.0).is_err());
    }

    #[test]
    fn defect_vanishes_at_start_for_corpus() {
        for p in corpus::corpus() {
            for kappa in [0.0, 0.5, 3.0] {
                let d = homotopy_defect(&p, p.x0(), 0.0, kappa).unwrap();
                assert_eq!(d.defect, 0.0, "{}", p.name());
            }
        }
    }
}
