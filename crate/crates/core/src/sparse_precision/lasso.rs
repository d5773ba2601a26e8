//! Neighbourhood Lasso in covariance form.
//!
//! Solves `min_x ½ x'Σx − Σ_{·,i}'x + λ|x|₁` with `x_i = 0` by cyclic
//! coordinate descent, keeping the residual `g = Σ_{·,i} − Σx` up to date
//! after every coordinate move. At the optimum `g_j = λ sign(x_j)` for
//! active coordinates and `|g_j| ≤ λ` for the rest.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Lasso regression of coordinate `i` on all other coordinates, expressed
/// through the scaling matrix alone.
pub fn lasso_neighborhood(
    sigma: &Matrix,
    i: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vector> {
    let d = sigma.nrows();
    if sigma.ncols() != d || i >= d {
        return Err(Error::invalid(format!("lasso: column {i} out of range for {d}x{d} matrix")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lasso: lambda must be nonnegative, got {lambda}")));
    }
    if let Some(j) = (0..d).find(|&j| j != i && !(sigma[(j, j)] > 0.0)) {
        return Err(Error::invalid(format!("lasso: nonpositive diagonal at {j}")));
    }

    let mut x = Vector::zeros(d);
    let mut g: Vector = sigma.column(i).into_owned();
    let mut max_change = f64::INFINITY;
    for _ in 0..max_iter {
        max_change = 0.0_f64;
        for j in 0..d {
            if j == i {
                continue;
            }
            let sjj = sigma[(j, j)];
            let old = x[j];
            let new = soft_threshold(g[j] + sjj * old, lambda) / sjj;
            let delta = new - old;
            if delta != 0.0 {
                x[j] = new;
                g.axpy(-delta, &sigma.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            return Ok(x);
        }
    }
    Err(Error::LassoNotConverged {
        column: i,
        iterations: max_iter,
        max_change,
        kkt_residual: kkt_violation(sigma, i, lambda, &x),
    })
}

/// Largest violation of the Lasso first-order conditions at `x`.
pub fn kkt_violation(sigma: &Matrix, i: usize, lambda: f64, x: &Vector) -> f64 {
    let g = sigma.column(i) - sigma * x;
    (0..sigma.nrows())
        .filter(|&j| j != i)
        .map(|j| {
            if x[j] == 0.0 {
                (g[j].abs() - lambda).max(0.0)
            } else {
                (g[j] - lambda * x[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_shrinkage_gives_zero() {
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 1.0, 0.1, -0.2, 0.1, 1.0]);
        let x = lasso_neighborhood(&s, 0, 0.4, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_gives_zero() {
        let s = Matrix::identity(4, 4);
        let x = lasso_neighborhood(&s, 2, 1e-3, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_by_two_hand_solution() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let x = lasso_neighborhood(&s, 0, 0.1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 0.4).abs() < 1e-15);
        assert!(kkt_violation(&s, 0, 0.1, &x) < 1e-15);
    }

    #[test]
    fn non_convergence_is_reported() {
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.9, 0.8, 0.9, 1.0, 0.9, 0.8, 0.9, 1.0]);
        let err = lasso_neighborhood(&s, 0, 1e-4, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::LassoNotConverged { column: 0, .. }));
    }
}
