//! Directional derivatives, Jacobians and analytic-vs-numeric consistency checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Problem;

/// `√ε · max(1, ‖x‖)`.
pub fn default_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.sqrt() * x.norm().max(1.0)
}

/// One-sided forward difference `(F(x + step·h) − F(x)) / step`.
pub fn directional_derivative_fd(
    problem: &Problem,
    x: &DVector<f64>,
    h: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    problem.check_point(h)?;
    let fx = problem.evaluate(x)?;
    if h.iter().all(|v| *v == 0.0) {
        return Ok(DVector::zeros(fx.len()));
    }
    let shifted = x + h * step;
    let fs = problem.evaluate(&shifted)?;
    Ok((fs - fx) / step)
}

/// Forward-difference Jacobian with one column per input coordinate.
pub fn jacobian_fd(problem: &Problem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let fx = problem.evaluate(x)?;
    let step = default_step(x);
    let n = problem.input_dim();
    let mut jac = DMatrix::zeros(fx.len(), n);
    for j in 0..n {
        let mut xp = x.clone();
        xp[j] += step;
        // the representable increment, not the nominal one
        let dx = xp[j] - x[j];
        let col = (problem.evaluate(&xp)? - &fx) / dx;
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// The analytic Jacobian when attached, otherwise forward differences.
pub fn jacobian(problem: &Problem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match problem.analytic_jacobian(x) {
        Some(j) => j,
        None => jacobian_fd(problem, x),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `‖analytic − numeric‖ / max(1, ‖analytic‖)`.
    pub rel_error: f64,
}

pub fn check_derivative(problem: &Problem, x: &DVector<f64>, h: &DVector<f64>) -> Result<DerivativeReport> {
    check_derivative_with_step(problem, x, h, default_step(x))
}

pub fn check_derivative_with_step(
    problem: &Problem,
    x: &DVector<f64>,
    h: &DVector<f64>,
    step: f64,
) -> Result<DerivativeReport> {
    let jac = problem
        .analytic_jacobian(x)
        .ok_or_else(|| Error::MissingJacobian(problem.name().to_string()))??;
    problem.check_point(h)?;
    let analytic = jac * h;
    let numeric = directional_derivative_fd(problem, x, h, step)?;
    let rel_error = (&analytic - &numeric).norm() / analytic.norm().max(1.0);
    Ok(DerivativeReport {
        point: x.as_slice().to_vec(),
        direction: h.as_slice().to_vec(),
        analytic: analytic.as_slice().to_vec(),
        numeric: numeric.as_slice().to_vec(),
        rel_error,
    })
}
