use thiserror::Error;

/// Errors produced by evaluation, integration, path construction and estimation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no analytic Jacobian attached to problem `{0}`")]
    MissingJacobian(String),

    /// `t` is NaN when the failure is not tied to a path time.
    #[error("singular or ill-conditioned Jacobian{} (reciprocal condition {rcond:e}, x = {x:?})", at_time(*t))]
    SingularJacobian { t: f64, x: Vec<f64>, rcond: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("path left the trust ball at t = {t} (distance {distance} > r = {radius})")]
    BallExit { t: f64, distance: f64, radius: f64 },

    #[error("time {t} outside the domain of the reparametrization: {reason}")]
    Domain { t: f64, reason: &'static str },

    #[error("step acceptance infeasible at node {node}: lhs {lhs:e} > rhs {rhs:e} (y = {y:?})")]
    AcceptanceInfeasible {
        node: usize,
        y: Vec<f64>,
        lhs: f64,
        rhs: f64,
    },

    #[error("every sample point failed to evaluate ({failures} failures)")]
    AllSamplesFailed { failures: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}

fn at_time(t: f64) -> String {
    if t.is_nan() {
        String::new()
    } else {
        format!(" at t = {t}")
    }
}

impl Error {
    /// Fills in the path time of a singular-Jacobian error raised below the follower.
    pub(crate) fn at(self, t: f64) -> Self {
        match self {
            Error::SingularJacobian { t: old, x, rcond } if old.is_nan() => Error::SingularJacobian { t, x, rcond },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite_vec(v: &nalgebra::DVector<f64>, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub(crate) fn check_finite_mat(m: &nalgebra::DMatrix<f64>, context: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}
