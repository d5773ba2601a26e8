//! Rank-based estimate of the Gaussian-copula scaling matrix.
//!
//! Each column of the lag-stacked design is replaced by its (mid-)ranks,
//! pairwise Spearman's rho is computed in the Hoeffding form
//!
//! ```text
//! rho = 12 / (m^3 - m) * sum_t (R_t - (m+1)/2) (S_t - (m+1)/2)
//! ```
//!
//! and mapped to the latent Gaussian correlation through `2 sin(pi rho / 6)`.
//! Blocks along each block-diagonal of the result are then averaged so the
//! estimate has the block-Toeplitz shape of a stationary process.
//!
//! Only ranks enter the computation, so the output is bitwise invariant under
//! strictly increasing transforms of any input column.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Matrix};
use crate::panel::LaggedDesign;

pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-6;

/// Correlation matrix of the stacked latent vector, with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    sigma: Matrix,
    block_size: usize,
    p: usize,
}

impl ScalingMatrix {
    /// Wraps a symmetric matrix of dimension `(p+1) * block_size`.
    pub fn new(sigma: Matrix, block_size: usize, p: usize) -> Result<Self> {
        let d = (p + 1) * block_size;
        if sigma.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "scaling matrix is {:?}, expected {d}x{d}",
                sigma.shape()
            )));
        }
        Ok(Self { sigma, block_size, p })
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Mid-ranks (1-based), ties receive the average of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share the average rank
        let r = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = r;
        }
        start = end;
    }
    ranks
}

fn centered_ranks(x: &[f64], column: usize) -> Result<Vec<f64>> {
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::ZeroRankVariance { column });
    }
    let mid = (x.len() as f64 + 1.0) / 2.0;
    Ok(mid_ranks(x).into_iter().map(|r| r - mid).collect())
}

fn hoeffding_scale(m: usize) -> f64 {
    let m = m as f64;
    12.0 / (m * m * m - m)
}

/// Sample Spearman's rho between two equally long vectors.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman_rho: length mismatch"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("spearman_rho: need at least 3 observations"));
    }
    let rx = centered_ranks(x, 0)?;
    let ry = centered_ranks(y, 1)?;
    let s: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    Ok(hoeffding_scale(x.len()) * s)
}

/// `2 sin(pi rho / 6)`: maps Spearman's rho to the Gaussian correlation.
pub fn rho_to_correlation(rho: f64) -> f64 {
    2.0 * (std::f64::consts::PI / 6.0 * rho).sin()
}

/// Raw matrix of pairwise Spearman's rho between the columns of `x`.
pub fn spearman_matrix(x: &Matrix) -> Result<Matrix> {
    let (m, d) = x.shape();
    let cols: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|c| centered_ranks(x.column(c).as_slice(), c))
        .collect::<Result<_>>()?;
    let r = Matrix::from_fn(m, d, |i, c| cols[c][i]);
    let mut rho = r.tr_mul(&r) * hoeffding_scale(m);
    for i in 0..d {
        rho[(i, i)] = 1.0;
        for j in (i + 1)..d {
            let v = rho[(i, j)];
            rho[(j, i)] = v;
        }
    }
    Ok(rho)
}

/// Copula scaling matrix of the lagged design, block-averaged.
pub fn scaling_matrix(w: &LaggedDesign) -> Result<ScalingMatrix> {
    let rho = spearman_matrix(w.values())?;
    let d = rho.nrows();
    let mut sigma = Matrix::identity(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = rho_to_correlation(rho[(i, j)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    average_blocks(&mut sigma, w.block_size(), w.p());
    ScalingMatrix::new(sigma, w.block_size(), w.p())
}

/// Replaces every block along each block-diagonal by the average of that
/// diagonal's blocks; blocks below the diagonal are the transposes.
fn average_blocks(sigma: &mut Matrix, k: usize, p: usize) {
    for offset in 0..=p {
        let count = p + 1 - offset;
        if count < 2 && offset > 0 {
            // one block, only need its mirror to agree (already symmetric)
            continue;
        }
        let mut avg = Matrix::zeros(k, k);
        for r in 0..count {
            let c = r + offset;
            avg += sigma.view((r * k, c * k), (k, k));
        }
        avg /= count as f64;
        if offset == 0 {
            // diagonal blocks: keep them exactly symmetric with unit diagonal
            for i in 0..k {
                avg[(i, i)] = 1.0;
                for j in (i + 1)..k {
                    let v = 0.5 * (avg[(i, j)] + avg[(j, i)]);
                    avg[(i, j)] = v;
                    avg[(j, i)] = v;
                }
            }
        }
        for r in 0..count {
            let c = r + offset;
            sigma.view_mut((r * k, c * k), (k, k)).copy_from(&avg);
            if offset > 0 {
                sigma.view_mut((c * k, r * k), (k, k)).copy_from(&avg.transpose());
            }
        }
    }
}

/// Clips eigenvalues below `floor`, reconstructs and rescales to unit
/// diagonal. Inputs already satisfying the floor are returned unchanged.
pub fn psd_repair(sigma: &ScalingMatrix, floor: f64) -> ScalingMatrix {
    let mut m = sigma.sigma().clone();
    let mut level = floor;
    for _ in 0..100 {
        if min_eigenvalue(&m) >= floor {
            break;
        }
        let eig = m.clone().symmetric_eigen();
        let clipped = eig.eigenvalues.map(|v| v.max(level));
        let v = &eig.eigenvectors;
        let mut rebuilt = v * Matrix::from_diagonal(&clipped) * v.transpose();
        let scale: Vec<f64> = (0..rebuilt.nrows()).map(|i| 1.0 / rebuilt[(i, i)].sqrt()).collect();
        for i in 0..rebuilt.nrows() {
            for j in 0..rebuilt.ncols() {
                rebuilt[(i, j)] *= scale[i] * scale[j];
            }
        }
        for i in 0..rebuilt.nrows() {
            rebuilt[(i, i)] = 1.0;
            for j in (i + 1)..rebuilt.ncols() {
                let v = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                rebuilt[(i, j)] = v;
                rebuilt[(j, i)] = v;
            }
        }
        m = rebuilt;
        // rescaling can pull the smallest eigenvalue back under the floor
        level *= 2.0;
    }
    ScalingMatrix {
        sigma: m,
        block_size: sigma.block_size,
        p: sigma.p,
    }
}
