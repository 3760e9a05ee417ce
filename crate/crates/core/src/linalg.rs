//! Dense LU factorization with partial pivoting and a 1-norm reciprocal
//! condition estimate, sized for the small systems the followers solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition below which a Jacobian is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// `PA = LU` with unit lower-triangular `L` stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    /// `(PA)[i] = A[perm[i]]`.
    perm: Vec<usize>,
    norm1: f64,
    singular: bool,
}

impl Lu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "LU factorization (square matrix required)".into(),
                expected: n,
                found: a.ncols(),
            });
        }
        crate::error::check_finite_mat(a, "LU factorization input")?;

        let norm1 = one_norm(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;

        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let l = lu[(i, k)] / d;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }

        Ok(Self {
            lu,
            perm,
            norm1,
            singular,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn is_exactly_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                context: "LU solve right-hand side".into(),
                expected: n,
                found: b.len(),
            });
        }
        if self.singular {
            return Err(Error::InvalidArgument("solve with a singular factorization".into()));
        }
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                context: "LU transpose solve right-hand side".into(),
                expected: n,
                found: b.len(),
            });
        }
        if self.singular {
            return Err(Error::InvalidArgument("solve with a singular factorization".into()));
        }
        // Uᵀ w = b
        let mut w = b.clone();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s / self.lu[(i, i)];
        }
        // Lᵀ v = w
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in (i + 1)..n {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = w[i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e)?);
        }
        Ok(inv)
    }

    /// Reciprocal condition estimate `1 / (max(1, ‖A‖₁) · ‖A⁻¹‖₁)`.
    ///
    /// `‖A⁻¹‖₁` comes from Hager's estimator with Higham's alternative vector as a
    /// second lower bound. Clamping `‖A‖₁` below at one makes the quantity an
    /// absolute singularity measure for small-scale matrices (a 1×1 Jacobian
    /// approaching zero otherwise always has condition one).
    pub fn rcond(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let inv_norm = match self.inverse_norm1_estimate() {
            Ok(v) if v.is_finite() => v,
            _ => return 0.0,
        };
        if inv_norm == 0.0 {
            return 0.0;
        }
        1.0 / (self.norm1.max(1.0) * inv_norm)
    }

    fn inverse_norm1_estimate(&self) -> Result<f64> {
        let n = self.dim();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0_f64;
        for iter in 0..5 {
            let y = self.solve(&x)?;
            est = est.max(y.iter().map(|v| v.abs()).sum());
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi)?;
            let (j, zmax) =
                z.iter()
                    .enumerate()
                    .map(|(i, v)| (i, v.abs()))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            if iter > 0 && zmax <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        if n > 1 {
            let alt = DVector::from_fn(n, |i, _| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + i as f64 / (n - 1) as f64)
            });
            let y = self.solve(&alt)?;
            let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
            est = est.max(alt_est);
        }
        Ok(est)
    }
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `(AᵀA + λI) x = Aᵀ b`, the damped least-squares system.
pub fn damped_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "damped least-squares right-hand side".into(),
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let n = a.ncols();
    let normal = a.transpose() * a + DMatrix::identity(n, n) * lambda;
    let lu = Lu::factor(&normal)?;
    if lu.is_exactly_singular() {
        return Err(Error::InvalidArgument(
            "damped normal equations are singular (increase damping)".into(),
        ));
    }
    lu.solve(&(a.transpose() * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![5.0, 3.0, 6.0]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&b).unwrap();
        assert_relative_eq!((&a * &x - &b).norm(), 0.0, epsilon = 1e-13);
        let z = lu.solve_transpose(&b).unwrap();
        assert_relative_eq!((a.transpose() * &z - &b).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let inv = Lu::factor(&a).unwrap().inverse().unwrap();
        assert_relative_eq!(&a * inv, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn rcond_matches_exact_for_diagonal() {
        // ‖A‖₁ = 4, ‖A⁻¹‖₁ = 2 -> rcond = 1/8
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.5]));
        let rc = Lu::factor(&a).unwrap().rcond();
        assert_relative_eq!(rc, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn rcond_flags_singular_and_tiny_scalars() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Lu::factor(&a).unwrap().rcond() < RCOND_THRESHOLD);
        let tiny = DMatrix::from_element(1, 1, 1e-14);
        assert!(Lu::factor(&tiny).unwrap().rcond() < RCOND_THRESHOLD);
        let zero = DMatrix::from_element(1, 1, 0.0);
        assert_eq!(Lu::factor(&zero).unwrap().rcond(), 0.0);
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(Lu::factor(&DMatrix::zeros(2, 3)).is_err());
        let bad = DMatrix::from_element(1, 1, f64::NAN);
        assert!(matches!(Lu::factor(&bad), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn damped_least_squares_overdetermined() {
        // exact fit exists: x = (1, 2)
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = damped_least_squares(&a, &b, 0.0).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-13);
    }
}
