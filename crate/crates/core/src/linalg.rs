//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot size below which a factorisation is treated as singular.
const SINGULAR_RTOL: f64 = 1e-13;

/// Inverse of a symmetric positive-definite matrix, falling back to LU when
/// the Cholesky factorisation fails. `None` if numerically singular.
pub fn sym_inverse(m: &Matrix) -> Option<Matrix> {
    if let Some(chol) = m.clone().cholesky() {
        let mut inv = chol.inverse();
        symmetrize_in_place(&mut inv);
        return Some(inv);
    }
    let mut inv = inverse(m)?;
    symmetrize_in_place(&mut inv);
    Some(inv)
}

/// General inverse via partial-pivot LU, rejecting near-singular inputs.
pub fn inverse(m: &Matrix) -> Option<Matrix> {
    if m.nrows() != m.ncols() {
        return None;
    }
    if m.nrows() == 0 {
        return Some(Matrix::zeros(0, 0));
    }
    let lu = m.clone().lu();
    if !lu_is_regular(&lu, m) {
        return None;
    }
    lu.try_inverse()
}

/// Solve `m x = b` for symmetric `m`, Cholesky first, LU as fallback.
pub fn solve_symmetric(m: &Matrix, b: &Vector) -> Option<Vector> {
    if m.nrows() == 0 {
        return Some(Vector::zeros(0));
    }
    if let Some(chol) = m.clone().cholesky() {
        return Some(chol.solve(b));
    }
    solve(m, b)
}

/// Solve `m x = b` by LU, rejecting near-singular systems.
pub fn solve(m: &Matrix, b: &Vector) -> Option<Vector> {
    if m.nrows() == 0 {
        return Some(Vector::zeros(0));
    }
    let lu = m.clone().lu();
    if !lu_is_regular(&lu, m) {
        return None;
    }
    lu.solve(b)
}

fn lu_is_regular(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, m: &Matrix) -> bool {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let u = lu.u();
    (0..u.nrows()).all(|i| u[(i, i)].abs() > SINGULAR_RTOL * scale)
}

pub fn symmetrize_in_place(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Operator (spectral) norm: the largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

const SCHUR_MAX_ITER: usize = 10_000;
const GELFAND_SQUARINGS: usize = 40;

/// Largest eigenvalue modulus of a square (not necessarily symmetric) matrix.
///
/// Uses a bounded Schur iteration; exactly nilpotent inputs such as the
/// companion matrix of an all-zero VAR can stall it, in which case the radius
/// comes from Gelfand's formula `lim |M^N|^{1/N}` by repeated squaring.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm())),
        None => gelfand_radius(m),
    }
}

fn gelfand_radius(m: &Matrix) -> f64 {
    let first = m.norm();
    if first == 0.0 {
        return 0.0;
    }
    // b = m^(2^k) / exp(log_norm), tracked in logs to avoid overflow.
    let mut b = m / first;
    let mut log_norm = first.ln();
    let mut power = 1.0_f64;
    for _ in 0..GELFAND_SQUARINGS {
        b = &b * &b;
        power *= 2.0;
        let s = b.norm();
        if s == 0.0 || !s.is_finite() {
            return 0.0;
        }
        b /= s;
        log_norm = 2.0 * log_norm + s.ln();
    }
    (log_norm / power).exp()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// `ln det` of a symmetric positive-definite matrix, `None` if not PD.
pub fn log_det_spd(m: &Matrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Rows `rows` and columns `cols` of `m`, in the given order.
pub fn submatrix(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Block-diagonal matrix assembled from square blocks.
pub fn block_diagonal(blocks: &[Matrix]) -> Matrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Stationary variance `Γ = F Γ F' + Q` by the doubling recursion.
pub fn lyapunov_variance(f: &Matrix, q: &Matrix) -> crate::Result<Matrix> {
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(crate::Error::Nonstationary { spectral_radius: rho });
    }
    let mut gamma = q.clone();
    let mut power = f.clone();
    for _ in 0..64 {
        let step = &power * &gamma * power.transpose();
        gamma += &step;
        power = &power * &power;
        if max_abs(&step) <= 1e-17 * max_abs(&gamma).max(1.0) {
            break;
        }
    }
    symmetrize_in_place(&mut gamma);
    let residual = max_abs(&(&gamma - f * &gamma * f.transpose() - q));
    if residual > 1e-10 * max_abs(&gamma).max(1.0) {
        return Err(crate::Error::Nonstationary { spectral_radius: rho });
    }
    Ok(gamma)
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn sym_sqrt(m: &Matrix) -> Matrix {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}
