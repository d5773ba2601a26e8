//! One CLIME column as a linear program.
//!
//! `min |ω|₁  s.t.  |Σω − e_i|_∞ ≤ λ` becomes, with `ω = u − v` and
//! `u, v ≥ 0`, a standard-form LP with `2d` variables and `2d` inequality
//! rows, solved by [`crate::simplex`].

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::simplex::{LinearProgram, LpError};

pub const DEFAULT_TOL: f64 = 1e-9;

pub fn clime_column(sigma: &Matrix, i: usize, lambda: f64, tol: f64) -> Result<Vector> {
    let d = sigma.nrows();
    if sigma.ncols() != d || i >= d {
        return Err(Error::invalid(format!("clime: column {i} out of range for {d}x{d} matrix")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("clime: lambda must be nonnegative, got {lambda}")));
    }
    let mut a = Matrix::zeros(2 * d, 2 * d);
    let mut b = vec![0.0; 2 * d];
    for r in 0..d {
        let e = if r == i { 1.0 } else { 0.0 };
        for c in 0..d {
            let s = sigma[(r, c)];
            // Σ(u − v) ≤ e + λ
            a[(r, c)] = s;
            a[(r, d + c)] = -s;
            // −Σ(u − v) ≤ λ − e
            a[(d + r, c)] = -s;
            a[(d + r, d + c)] = s;
        }
        b[r] = e + lambda;
        b[d + r] = lambda - e;
    }
    let lp = LinearProgram { c: vec![1.0; 2 * d], a, b };
    let sol = lp.solve().map_err(|e| match e {
        LpError::Infeasible => Error::ClimeInfeasible { column: i },
        other => Error::LinearProgram(other),
    })?;
    let omega = Vector::from_fn(d, |j, _| sol.x[j] - sol.x[d + j]);
    let violation = constraint_violation(sigma, i, &omega);
    if violation > lambda + tol.max(1e-8) {
        log::warn!("clime column {i}: constraint residual {violation:.3e} exceeds lambda {lambda:.3e}");
    }
    Ok(omega)
}

/// `|Σω − e_i|_∞`.
pub fn constraint_violation(sigma: &Matrix, i: usize, omega: &Vector) -> f64 {
    let mut r = sigma * omega;
    r[i] -= 1.0;
    r.amax()
}
