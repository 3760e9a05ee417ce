use std::io::{self, Write};

use nalgebra::DVector;
use serde::Serialize;

use super::integrator::{hermite, DenseNode, IntegratorStats};
use crate::spectral::KappaEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// `ẋ = −F′(x)⁻¹F(x₀)` on `[0, 1]`.
    Davidenko,
    /// `ż = −F′(z)⁻¹F(z)` on `[0, T]`.
    ContinuousNewton,
    /// `ẋ = M(x)F(x₀)` on `[0, 1]`.
    Generalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub norm_f: f64,
    pub defect: f64,
    pub bound: f64,
    pub outside_ball: bool,
}

/// Checkpoint record of one follower run.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub kind: FlowKind,
    pub points: Vec<TracePoint>,
    pub kappa_used: KappaEstimate,
    pub stats: IntegratorStats,
    pub exited_ball: bool,
    pub terminal: DVector<f64>,
    /// Every accepted step, for dense output.
    pub dense: Vec<DenseNode>,
}

impl PathTrace {
    pub fn initial_residual_norm(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.norm_f)
    }

    pub fn terminal_point(&self) -> &TracePoint {
        self.points.last().expect("trace has at least the initial point")
    }

    pub fn max_defect(&self) -> f64 {
        self.points.iter().map(|p| p.defect).fold(0.0, f64::max)
    }

    /// Largest `defect − bound` over checkpoints (negative when every bound holds with room).
    pub fn max_bound_excess(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.defect - p.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// State at time `t` by cubic Hermite interpolation between accepted steps.
    pub fn interpolate(&self, t: f64) -> Option<DVector<f64>> {
        if self.dense.is_empty() {
            return self.points.iter().find(|p| p.t == t).map(|p| p.x.clone());
        }
        hermite(&self.dense, t)
    }

    pub fn csv_header(n: usize, m: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("x_{i}")));
        cols.extend((1..=m).map(|i| format!("F_{i}")));
        cols.extend(["normF", "defect", "bound", "exited_ball"].map(String::from));
        cols.join(",")
    }

    /// One row per checkpoint under
    /// `t,x_1..x_n,F_1..F_m,normF,defect,bound,exited_ball`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (n, m) = self.points.first().map_or((0, 0), |p| (p.x.len(), p.residual.len()));
        writeln!(w, "{}", Self::csv_header(n, m))?;
        for p in &self.points {
            write_row(
                &mut w,
                p.t,
                &p.x,
                &p.residual,
                p.norm_f,
                p.defect,
                p.bound,
                p.outside_ball,
            )?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn write_row<W: Write>(
    w: &mut W,
    t: f64,
    x: &DVector<f64>,
    f: &DVector<f64>,
    norm_f: f64,
    defect: f64,
    bound: f64,
    outside: bool,
) -> io::Result<()> {
    let mut fields = Vec::with_capacity(5 + x.len() + f.len());
    fields.push(fmt_f64(t));
    fields.extend(x.iter().map(|v| fmt_f64(*v)));
    fields.extend(f.iter().map(|v| fmt_f64(*v)));
    fields.push(fmt_f64(norm_f));
    fields.push(fmt_f64(defect));
    fields.push(fmt_f64(bound));
    fields.push(outside.to_string());
    writeln!(w, "{}", fields.join(","))
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_roundtrips() {
        for v in [0.0, 1.0, -0.25, 1e-10, std::f64::consts::SQRT_2, 3.2e20, 5e-324] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(1e-10), "1e-10");
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            PathTrace::csv_header(2, 1),
            "t,x_1,x_2,F_1,normF,defect,bound,exited_ball"
        );
    }
}
