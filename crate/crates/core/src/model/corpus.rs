//! Built-in problems, each with an analytic Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{InverseProblem, Problem};

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn scalar_mat(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `x² − 2` from `x₀ = 1`, `r = 0.5`.
pub fn quadratic() -> Problem {
    Problem::new("quadratic", 1, scalar(1.0), 0.5, |x| scalar(x[0] * x[0] - 2.0))
        .expect("static problem")
        .with_jacobian(|x| scalar_mat(2.0 * x[0]))
}

/// `eˣ − 2` from `x₀ = 0`, `r = 1`.
pub fn exponential() -> Problem {
    Problem::new("exponential", 1, scalar(0.0), 1.0, |x| scalar(x[0].exp() - 2.0))
        .expect("static problem")
        .with_jacobian(|x| scalar_mat(x[0].exp()))
}

/// `x` from `x₀ = 1`, `r = 2`.
pub fn linear() -> Problem {
    Problem::new("linear", 1, scalar(1.0), 2.0, |x| scalar(x[0]))
        .expect("static problem")
        .with_jacobian(|_| scalar_mat(1.0))
}

/// `x` started at its root `x₀ = 0`, `r = 2`; the residual vanishes from the outset.
pub fn linear_root() -> Problem {
    Problem::new("linear-root", 1, scalar(0.0), 2.0, |x| scalar(x[0]))
        .expect("static problem")
        .with_jacobian(|_| scalar_mat(1.0))
}

/// `(x + y − 3, xy − 2)` from `(0.5, 0.5)`, `r = 3`. Roots at `(1, 2)` and `(2, 1)`;
/// the Jacobian is singular on the diagonal `x = y`, including at the start.
pub fn system2d() -> Problem {
    Problem::new("system2d", 2, DVector::from_vec(vec![0.5, 0.5]), 3.0, |v| {
        DVector::from_vec(vec![v[0] + v[1] - 3.0, v[0] * v[1] - 2.0])
    })
    .expect("static problem")
    .with_jacobian(|v| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, v[1], v[0]]))
}

/// `x³` from `x₀ = 0.5`, `r = 1`; the Jacobian vanishes at the root.
pub fn trap() -> Problem {
    Problem::new("trap", 1, scalar(0.5), 1.0, |x| scalar(x[0].powi(3)))
        .expect("static problem")
        .with_jacobian(|x| scalar_mat(3.0 * x[0] * x[0]))
}

pub fn corpus() -> Vec<Problem> {
    vec![quadratic(), exponential(), linear(), linear_root(), system2d(), trap()]
}

pub fn find_problem(name: &str) -> Result<Problem> {
    corpus()
        .into_iter()
        .find(|p| p.name() == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

/// `Ψ(x) = eˣ − 1` on `B₁(0)`.
pub fn exp_minus_one(g: f64) -> InverseProblem {
    InverseProblem::new("exp-minus-one", 1, scalar(g), 1.0, |x| scalar(x[0].exp() - 1.0))
        .expect("static inverse problem")
        .with_jacobian(|x| scalar_mat(x[0].exp()))
}

/// `Ψ(x) = x` on `B₁(0)`.
pub fn identity(g: f64) -> InverseProblem {
    InverseProblem::new("identity", 1, scalar(g), 1.0, |x| x.clone())
        .expect("static inverse problem")
        .with_jacobian(|_| scalar_mat(1.0))
}

pub fn inverse_names() -> &'static [&'static str] {
    &["exp-minus-one", "identity"]
}

pub fn find_inverse(name: &str, g: f64) -> Result<InverseProblem> {
    match name {
        "exp-minus-one" => Ok(exp_minus_one(g)),
        "identity" => Ok(identity(g)),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_contents() {
        let names: Vec<_> = corpus().iter().map(|p| p.name().to_string()).collect();
        for want in ["quadratic", "exponential", "linear", "system2d", "trap"] {
            assert!(names.iter().any(|n| n == want), "missing {want}");
        }
        assert!(corpus().iter().all(|p| p.has_analytic_jacobian()));
    }

    #[test]
    fn corpus_by_construction() {
        assert_eq!(
            find_problem("quadratic").unwrap().evaluate(&scalar(1.0)).unwrap()[0],
            -1.0
        );
        let lin = find_problem("linear").unwrap();
        for v in [-3.0, 0.0, 7.5] {
            assert_eq!(lin.analytic_jacobian(&scalar(v)).unwrap().unwrap()[(0, 0)], 1.0);
        }
        let trap = find_problem("trap").unwrap();
        assert_eq!(trap.analytic_jacobian(&scalar(0.0)).unwrap().unwrap()[(0, 0)], 0.0);
        assert_eq!(linear_root().initial_residual().unwrap()[0], 0.0);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(find_problem("nonexistent"), Err(Error::UnknownProblem(_))));
        assert!(find_inverse("nope", 1.0).is_err());
    }

    #[test]
    fn inverse_problem_derivation() {
        let inv = exp_minus_one(1.0);
        let p = inv.derived_problem();
        assert_eq!(p.initial_residual().unwrap()[0], -1.0);
        assert!(InverseProblem::new("bad", 1, scalar(1.0), 1.0, |x| scalar(x[0] + 1.0)).is_err());
    }
}
