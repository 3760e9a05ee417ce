use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus;
use crate::error::{check_finite_mat, check_finite_vec, Error, Result};
use crate::linalg::{self, Lu, RCOND_THRESHOLD};
use crate::model::Problem;

pub type OperatorFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    ExactNewton,
    FrozenJacobian,
    Diagonal,
    Damped,
    Custom,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorKind::ExactNewton => "exact_newton",
            OperatorKind::FrozenJacobian => "frozen_jacobian",
            OperatorKind::Diagonal => "diagonal",
            OperatorKind::Damped => "damped",
            OperatorKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Clone)]
enum Recipe {
    ExactNewton,
    FrozenAnchored,
    FrozenConstant,
    Diagonal,
    Damped(f64),
    Custom,
}

/// The map `x ↦ M(x) ∈ R^{n×m}` that sets the flow direction `ẋ = M(x)F(x₀)`.
#[derive(Clone)]
pub struct InverseOperator {
    kind: OperatorKind,
    params: Vec<(String, f64)>,
    n: usize,
    m: usize,
    recipe: Recipe,
    apply: OperatorFn,
}

impl InverseOperator {
    /// `M(x) = −F′(x)⁻¹`. Requires a square problem.
    pub fn exact_newton(problem: &Problem) -> Result<Self> {
        require_square(problem, "exact_newton")?;
        let p = problem.clone();
        Ok(Self {
            kind: OperatorKind::ExactNewton,
            params: Vec::new(),
            n: problem.input_dim(),
            m: problem.output_dim(),
            recipe: Recipe::ExactNewton,
            apply: Arc::new(move |x| negated_inverse(&calculus::jacobian(&p, x)?, x)),
        })
    }

    /// `M ≡ −F′(x₀)⁻¹` (pseudo-inverse when `n ≠ m`), anchored at the problem's
    /// current center. [`InverseOperator::refreshed_for`] re-anchors it.
    pub fn frozen_jacobian(problem: &Problem) -> Result<Self> {
        let x0 = problem.x0().clone();
        let j = calculus::jacobian(problem, &x0)?;
        let frozen = if j.nrows() == j.ncols() {
            negated_inverse(&j, &x0)?
        } else {
            let pinv = j
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            -pinv
        };
        let mut op = Self::constant(problem.input_dim(), problem.output_dim(), frozen)?;
        op.kind = OperatorKind::FrozenJacobian;
        op.recipe = Recipe::FrozenAnchored;
        op.params = x0
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("anchor_{}", i + 1), *v))
            .collect();
        Ok(op)
    }

    /// `M ≡ c·I` (the rectangular identity when `n ≠ m`).
    pub fn frozen_scalar(problem: &Problem, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("frozen operator value {value}")));
        }
        let (n, m) = (problem.input_dim(), problem.output_dim());
        let mut op = Self::constant(n, m, DMatrix::identity(n, m) * value)?;
        op.kind = OperatorKind::FrozenJacobian;
        op.recipe = Recipe::FrozenConstant;
        op.params = vec![("value".into(), value)];
        Ok(op)
    }

    /// `M ≡ matrix`.
    pub fn constant(n: usize, m: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != n || matrix.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: format!("constant operator (shape {}x{})", matrix.nrows(), matrix.ncols()),
                expected: n * m,
                found: matrix.nrows() * matrix.ncols(),
            });
        }
        check_finite_mat(&matrix, "constant operator")?;
        Ok(Self {
            kind: OperatorKind::FrozenJacobian,
            params: Vec::new(),
            n,
            m,
            recipe: Recipe::FrozenConstant,
            apply: Arc::new(move |_| Ok(matrix.clone())),
        })
    }

    /// `M(x) = −diag(F′(x))⁻¹`. Requires a square problem.
    pub fn diagonal(problem: &Problem) -> Result<Self> {
        require_square(problem, "diagonal")?;
        let p = problem.clone();
        Ok(Self {
            kind: OperatorKind::Diagonal,
            params: Vec::new(),
            n: problem.input_dim(),
            m: problem.output_dim(),
            recipe: Recipe::Diagonal,
            apply: Arc::new(move |x| {
                let j = calculus::jacobian(&p, x)?;
                let n = j.nrows();
                let mut out = DMatrix::zeros(n, n);
                for i in 0..n {
                    let d = j[(i, i)];
                    if d.abs() < RCOND_THRESHOLD {
                        return Err(Error::SingularJacobian {
                            t: f64::NAN,
                            x: x.as_slice().to_vec(),
                            rcond: d.abs(),
                        });
                    }
                    out[(i, i)] = -1.0 / d;
                }
                Ok(out)
            }),
        })
    }

    /// `M(x) = −(F′(x)ᵀF′(x) + λI)⁻¹F′(x)ᵀ`, a Levenberg–Marquardt style inverse.
    pub fn damped(problem: &Problem, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("damping must be >= 0, got {lambda}")));
        }
        let p = problem.clone();
        Ok(Self {
            kind: OperatorKind::Damped,
            params: vec![("lambda".into(), lambda)],
            n: problem.input_dim(),
            m: problem.output_dim(),
            recipe: Recipe::Damped(lambda),
            apply: Arc::new(move |x| {
                let j = calculus::jacobian(&p, x)?;
                let n = j.ncols();
                let normal = j.transpose() * &j + DMatrix::identity(n, n) * lambda;
                let lu = Lu::factor(&normal)?;
                if lu.rcond() < RCOND_THRESHOLD {
                    return Err(Error::SingularJacobian {
                        t: f64::NAN,
                        x: x.as_slice().to_vec(),
                        rcond: lu.rcond(),
                    });
                }
                Ok(-(lu.inverse()? * j.transpose()))
            }),
        })
    }

    pub fn custom<F>(n: usize, m: usize, params: Vec<(String, f64)>, apply: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self {
            kind: OperatorKind::Custom,
            params,
            n,
            m,
            recipe: Recipe::Custom,
            apply: Arc::new(apply),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn conforms_to(&self, problem: &Problem) -> Result<()> {
        if self.n != problem.input_dim() || self.m != problem.output_dim() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "operator shape {}x{} against problem `{}` ({}x{})",
                    self.n,
                    self.m,
                    problem.name(),
                    problem.input_dim(),
                    problem.output_dim()
                ),
                expected: problem.input_dim() * problem.output_dim(),
                found: self.n * self.m,
            });
        }
        Ok(())
    }

    /// `M(x)`, checked for shape and finiteness.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mat = (self.apply)(x)?;
        if mat.nrows() != self.n || mat.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                context: format!("{} operator output (shape {}x{})", self.kind, mat.nrows(), mat.ncols()),
                expected: self.n * self.m,
                found: mat.nrows() * mat.ncols(),
            });
        }
        check_finite_mat(&mat, &format!("{} operator", self.kind))?;
        Ok(mat)
    }

    /// `M(x)·v`.
    pub fn apply_to(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.m {
            return Err(Error::DimensionMismatch {
                context: "operator argument".into(),
                expected: self.m,
                found: v.len(),
            });
        }
        let out = self.apply(x)? * v;
        check_finite_vec(&out, &format!("{} operator action", self.kind))?;
        Ok(out)
    }

    /// The operator to use after re-centering at `problem.x0()`: anchored frozen
    /// Jacobians are re-frozen there, everything else is reused unchanged.
    pub fn refreshed_for(&self, problem: &Problem) -> Result<Self> {
        match self.recipe {
            Recipe::FrozenAnchored => Self::frozen_jacobian(problem),
            Recipe::ExactNewton | Recipe::FrozenConstant | Recipe::Diagonal | Recipe::Damped(_) | Recipe::Custom => {
                Ok(self.clone())
            }
        }
    }

    pub fn describe(&self) -> String {
        let mut s = self.kind.to_string();
        if let Recipe::Damped(l) = self.recipe {
            s.push_str(&format!("(lambda={l})"));
        } else if let Some(v) = self.param("value") {
            s.push_str(&format!("(value={v})"));
        }
        s
    }
}

impl fmt::Debug for InverseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseOperator")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("shape", &(self.n, self.m))
            .finish()
    }
}

fn require_square(problem: &Problem, what: &str) -> Result<()> {
    if problem.input_dim() != problem.output_dim() {
        return Err(Error::DimensionMismatch {
            context: format!("{what} operator requires n = m for `{}`", problem.name()),
            expected: problem.input_dim(),
            found: problem.output_dim(),
        });
    }
    Ok(())
}

fn negated_inverse(j: &DMatrix<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let lu = Lu::factor(j)?;
    let rcond = lu.rcond();
    if rcond < RCOND_THRESHOLD {
        return Err(Error::SingularJacobian {
            t: f64::NAN,
            x: x.as_slice().to_vec(),
            rcond,
        });
    }
    Ok(-lu.inverse()?)
}

/// Solves `F′(x) d = −v`, the exact Newton action, with the singularity check.
pub(crate) fn newton_action(j: &DMatrix<f64>, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = Lu::factor(j)?;
    let rcond = lu.rcond();
    if rcond < RCOND_THRESHOLD {
        return Err(Error::SingularJacobian {
            t: f64::NAN,
            x: x.as_slice().to_vec(),
            rcond,
        });
    }
    Ok(-lu.solve(v)?)
}

/// `−(JᵀJ + λI)⁻¹Jᵀv`, the opt-in fallback for singular square Jacobians.
pub(crate) fn damped_action(j: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    Ok(-linalg::damped_least_squares(j, v, lambda)?)
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
    fn exact_newton_on_quadratic() {
        let q = corpus::quadratic();
        let op = InverseOperator::exact_newton(&q).unwrap();
        assert_relative_eq!(op.apply(&x(2.0)).unwrap()[(0, 0)], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn exact_newton_rejects_non_square() {
        let p = Problem::new("rect", 1, DVector::zeros(2), 1.0, |x| {
            DVector::from_element(1, x[0] + x[1])
        })
        .unwrap();
        assert!(matches!(
            InverseOperator::exact_newton(&p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frozen_anchors_at_center_and_refreshes() {
        let q = corpus::quadratic();
        let op = InverseOperator::frozen_jacobian(&q).unwrap();
        assert_relative_eq!(op.apply(&x(1.4)).unwrap()[(0, 0)], -0.5, epsilon = 1e-15);
        let moved = q.recentered(x(2.0)).unwrap();
        let refreshed = op.refreshed_for(&moved).unwrap();
        assert_relative_eq!(refreshed.apply(&x(1.4)).unwrap()[(0, 0)], -0.25, epsilon = 1e-15);
        let scalar = InverseOperator::frozen_scalar(&q, -0.5).unwrap();
        assert_relative_eq!(
            scalar.refreshed_for(&moved).unwrap().apply(&x(3.0)).unwrap()[(0, 0)],
            -0.5
        );
    }

    #[test]
    fn trap_singular_at_origin() {
        let trap = corpus::trap();
        let op = InverseOperator::exact_newton(&trap).unwrap();
        assert!(matches!(op.apply(&x(0.0)), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn damped_tends_to_newton_as_lambda_vanishes() {
        let q = corpus::quadratic();
        let op = InverseOperator::damped(&q, 1e-12).unwrap();
        assert_relative_eq!(op.apply(&x(1.0)).unwrap()[(0, 0)], -0.5, epsilon = 1e-10);
        assert!(InverseOperator::damped(&q, -1.0).is_err());
    }

    #[test]
    fn custom_output_is_checked() {
        let op = InverseOperator::custom(1, 1, vec![], |_| Ok(DMatrix::from_element(1, 1, f64::NAN)));
        assert!(matches!(op.apply(&x(0.0)), Err(Error::NonFinite { .. })));
        let wrong = InverseOperator::custom(1, 1, vec![], |_| Ok(DMatrix::zeros(2, 1)));
        assert!(matches!(wrong.apply(&x(0.0)), Err(Error::DimensionMismatch { .. })));
    }
}
