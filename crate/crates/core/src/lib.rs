//! Residual-controlled homotopy path following.
//!
//! For a map `F: Rⁿ → Rᵐ`, an initial point `x₀` and an approximate inverse
//! `M(x) ≈ −F′(x)⁻¹`, the flow `ẋ = M(x)F(x₀)` keeps the homotopy defect
//! `‖F(x(t)) − (1−t)F(x₀)‖` below `κ·t·‖F(x₀)‖`, with `κ` the largest distance of
//! `F′(x)M(x)` from `−I` over the trust ball. This crate follows such paths,
//! builds them constructively on dyadic partitions, restarts them for geometric
//! residual contraction, and checks every bound against the computed data.
//!
//! Modules:
//! - [`model`]: problems, inverse operators, the corpus, homotopy defects
//! - [`calculus`]: directional derivatives and Jacobians
//! - [`spectral`]: operator norms and `κ` estimation
//! - [`flow`]: ODE followers (Davidenko, continuous Newton, generalized)
//! - [`builder`]: piecewise-linear paths with per-step acceptance certificates
//! - [`driver`]: restarts and the approximate inverse solver

// `!(x > 0.0)` style guards are used to reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod calculus;
pub mod driver;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{corpus, homotopy_defect, HomotopyDefect, InverseOperator, InverseProblem, OperatorKind, Problem};
pub use spectral::{KappaEstimate, KappaMethod};
