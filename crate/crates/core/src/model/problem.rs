use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite_mat, check_finite_vec, Error, Result};

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Rounding allowance on the trust-ball boundary.
pub const BALL_SLACK: f64 = 1e-12;

/// A nonlinear map `F: Rⁿ → Rᵐ` together with its starting point and trust radius.
///
/// Values are immutable once built; cloning shares the underlying closures.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    m: usize,
    eval: VectorFn,
    jacobian: Option<MatrixFn>,
    x0: DVector<f64>,
    r: f64,
}

/// A residual together with whether it was taken outside the closed trust ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: DVector<f64>,
    pub outside_ball: bool,
}

impl Problem {
    pub fn new<F>(name: impl Into<String>, m: usize, x0: DVector<f64>, r: f64, eval: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let name = name.into();
        let n = x0.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "problem `{name}` needs n >= 1 and m >= 1 (got n = {n}, m = {m})"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "problem `{name}` needs a positive finite trust radius (got {r})"
            )));
        }
        check_finite_vec(&x0, "initial point")?;
        Ok(Self {
            name,
            n,
            m,
            eval: Arc::new(eval),
            jacobian: None,
            x0,
            r,
        })
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Same map and radius, new center. Used by restarts.
    pub fn recentered(&self, x0: DVector<f64>) -> Result<Self> {
        self.check_point(&x0)?;
        check_finite_vec(&x0, "recentered initial point")?;
        Ok(Self { x0, ..self.clone() })
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn distance_from_center(&self, x: &DVector<f64>) -> f64 {
        (x - &self.x0).norm()
    }

    /// Points within rounding of the sphere (`1e-12·max(1, r)`) count as inside.
    pub fn outside_ball(&self, x: &DVector<f64>) -> bool {
        self.distance_from_center(x) > self.r + BALL_SLACK * self.r.max(1.0)
    }

    pub(crate) fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: format!("point for problem `{}`", self.name),
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `F(x)`. NaN or Inf in the output is an evaluation failure.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let fx = (self.eval)(x);
        if fx.len() != self.m {
            return Err(Error::DimensionMismatch {
                context: format!("residual of problem `{}`", self.name),
                expected: self.m,
                found: fx.len(),
            });
        }
        check_finite_vec(&fx, &format!("evaluation of `{}`", self.name))?;
        Ok(fx)
    }

    pub fn evaluate_flagged(&self, x: &DVector<f64>) -> Result<Evaluation> {
        Ok(Evaluation {
            value: self.evaluate(x)?,
            outside_ball: self.outside_ball(x),
        })
    }

    /// `F(x₀)`.
    pub fn initial_residual(&self) -> Result<DVector<f64>> {
        self.evaluate(&self.x0)
    }

    /// The attached analytic Jacobian at `x`, or `None` when the problem has none.
    pub fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        let jac = self.jacobian.as_ref()?;
        Some(self.check_point(x).and_then(|_| {
            let j = jac(x);
            if j.nrows() != self.m || j.ncols() != self.n {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "analytic Jacobian of `{}` (shape {}x{})",
                        self.name,
                        j.nrows(),
                        j.ncols()
                    ),
                    expected: self.m * self.n,
                    found: j.nrows() * j.ncols(),
                });
            }
            check_finite_mat(&j, &format!("analytic Jacobian of `{}`", self.name))?;
            Ok(j)
        }))
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("x0", &self.x0.as_slice())
            .field("r", &self.r)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// `Ψ` with `Ψ(0) = 0` and a target `g`; solved through `F(x) := Ψ(x) − g` from `x₀ = 0`.
#[derive(Clone)]
pub struct InverseProblem {
    name: String,
    psi: VectorFn,
    jacobian: Option<MatrixFn>,
    g: DVector<f64>,
    n: usize,
    r: f64,
}

/// Tolerance on `‖Ψ(0)‖`.
pub const PSI_ORIGIN_TOL: f64 = 1e-12;

impl InverseProblem {
    pub fn new<P>(name: impl Into<String>, n: usize, g: DVector<f64>, r: f64, psi: P) -> Result<Self>
    where
        P: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let name = name.into();
        if n == 0 || g.is_empty() || !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "inverse problem `{name}` needs n, m >= 1 and a positive finite radius"
            )));
        }
        let origin = DVector::zeros(n);
        let at_origin = psi(&origin);
        if at_origin.len() != g.len() {
            return Err(Error::DimensionMismatch {
                context: format!("Ψ(0) of inverse problem `{name}` against target"),
                expected: g.len(),
                found: at_origin.len(),
            });
        }
        check_finite_vec(&g, "inverse-problem target")?;
        check_finite_vec(&at_origin, "Ψ(0)")?;
        if at_origin.norm() > PSI_ORIGIN_TOL {
            return Err(Error::InvalidArgument(format!(
                "inverse problem `{name}` requires Ψ(0) = 0, got norm {:e}",
                at_origin.norm()
            )));
        }
        Ok(Self {
            name,
            psi: Arc::new(psi),
            jacobian: None,
            g,
            n,
            r,
        })
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Same `Ψ`, different target.
    pub fn with_target(&self, g: DVector<f64>) -> Result<Self> {
        if g.len() != self.g.len() {
            return Err(Error::DimensionMismatch {
                context: "inverse-problem target".into(),
                expected: self.g.len(),
                found: g.len(),
            });
        }
        check_finite_vec(&g, "inverse-problem target")?;
        Ok(Self { g, ..self.clone() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn psi(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.psi)(x)
    }

    /// The problem `F(x) = Ψ(x) − g` centered at the origin, so `F(x₀) = −g`.
    pub fn derived_problem(&self) -> Problem {
        let psi = Arc::clone(&self.psi);
        let g = self.g.clone();
        let mut problem = Problem::new(
            format!("{}-minus-target", self.name),
            self.g.len(),
            DVector::zeros(self.n),
            self.r,
            move |x| psi(x) - &g,
        )
        .expect("inverse problem validated at construction");
        if let Some(jac) = &self.jacobian {
            let jac = Arc::clone(jac);
            problem = problem.with_jacobian(move |x| jac(x));
        }
        problem
    }
}

impl fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblem")
            .field("name", &self.name)
            .field("g", &self.g.as_slice())
            .field("r", &self.r)
            .finish()
    }
}
