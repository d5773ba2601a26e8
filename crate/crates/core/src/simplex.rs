//! Dense two-phase tableau simplex for small linear programs
//!
//! ```text
//! minimise c'x  subject to  A x <= b,  x >= 0
//! ```
//!
//! `b` may have either sign; rows with negative right-hand side receive an
//! artificial variable and are handled in phase one. Pivoting follows Bland's
//! rule (lowest eligible index for both entering and leaving variables), which
//! cannot cycle. The final basic solution is recomputed from the original
//! data with an LU solve to remove round-off accumulated in the tableau.

use crate::linalg::{Matrix, Vector};

const PIVOT_EPS: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("inconsistent linear program dimensions")]
    Dimension,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.data[row * w + col];
        for c in 0..w {
            self.data[row * w + c] /= p;
        }
        let pivot_row: Vec<f64> = self.data[row * w..(row + 1) * w].to_vec();
        // includes the objective row, stored last
        for r in 0..=self.rows {
            if r == row {
                continue;
            }
            let f = self.data[r * w + col];
            if f != 0.0 {
                let dst = &mut self.data[r * w..(r + 1) * w];
                for (d, s) in dst.iter_mut().zip(&pivot_row) {
                    *d -= f * s;
                }
                dst[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Loads `cost` into the objective row as reduced costs for the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.rows * w;
        for c in 0..w - 1 {
            self.data[obj + c] = cost[c];
        }
        self.data[obj + w - 1] = 0.0;
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    /// Bland's-rule iterations over the columns marked in `allowed`.
    fn run(&mut self, allowed: &[bool], iterations: &mut usize) -> Result<(), LpError> {
        let obj = self.rows;
        loop {
            if *iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit);
            }
            let entering = (0..self.width - 1).find(|&c| allowed[c] && self.at(obj, c) < -PIVOT_EPS);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            let tie = (ratio - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                            if ratio < bv && !tie || tie && self.basis[r] < self.basis[br] {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
            *iterations += 1;
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let (m, n) = self.a.shape();
        if self.c.len() != n || self.b.len() != m {
            return Err(LpError::Dimension);
        }
        let art_rows: Vec<usize> = (0..m).filter(|&i| self.b[i] < 0.0).collect();
        let n_art = art_rows.len();
        let ncols = n + m + n_art;
        let width = ncols + 1;

        // Sign-adjusted constraint matrix [A | S | Art] and right-hand side.
        let mut aug = Matrix::zeros(m, ncols);
        let mut rhs = Vector::zeros(m);
        let mut basis = vec![0usize; m];
        let mut art = 0;
        for i in 0..m {
            let sign = if self.b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                aug[(i, j)] = sign * self.a[(i, j)];
            }
            aug[(i, n + i)] = sign;
            rhs[i] = sign * self.b[i];
            if sign < 0.0 {
                aug[(i, n + m + art)] = 1.0;
                basis[i] = n + m + art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
        }

        let mut data = vec![0.0; (m + 1) * width];
        for i in 0..m {
            for j in 0..ncols {
                data[i * width + j] = aug[(i, j)];
            }
            data[i * width + ncols] = rhs[i];
        }
        let mut tab = Tableau { rows: m, width, data, basis };
        let mut iterations = 0;

        if n_art > 0 {
            let mut cost = vec![0.0; ncols];
            for c in cost.iter_mut().skip(n + m) {
                *c = 1.0;
            }
            tab.set_objective(&cost);
            tab.run(&vec![true; ncols], &mut iterations)?;
            let infeasibility = -tab.rhs(m);
            let scale = 1.0 + rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if infeasibility > 1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // Drive remaining artificials out of the basis where possible.
            for r in 0..m {
                if tab.basis[r] >= n + m {
                    if let Some(col) = (0..n + m).find(|&c| tab.at(r, c).abs() > PIVOT_EPS) {
                        tab.pivot(r, col);
                    }
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.c);
        tab.set_objective(&cost);
        let allowed: Vec<bool> = (0..ncols).map(|c| c < n + m).collect();
        tab.run(&allowed, &mut iterations)?;

        let mut values = vec![0.0; ncols];
        for r in 0..m {
            values[tab.basis[r]] = tab.rhs(r);
        }
        if let Some(refined) = refine(&aug, &rhs, &tab.basis) {
            values = refined;
        }
        let x: Vec<f64> = values[..n].iter().map(|v| v.max(0.0)).collect();
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective, iterations })
    }
}

/// Recomputes the basic solution `B x_B = b` from the original data.
fn refine(aug: &Matrix, rhs: &Vector, basis: &[usize]) -> Option<Vec<f64>> {
    let m = basis.len();
    if m == 0 {
        return Some(vec![0.0; aug.ncols()]);
    }
    let b = Matrix::from_fn(m, m, |r, c| aug[(r, basis[c])]);
    let xb = crate::linalg::solve(&b, rhs)?;
    if xb.iter().any(|v| !v.is_finite() || *v < -1e-7) {
        return None;
    }
    let mut values = vec![0.0; aug.ncols()];
    for (k, &col) in basis.iter().enumerate() {
        values[col] = xb[k].max(0.0);
    }
    Some(values)
}
