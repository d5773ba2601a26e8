//! Sparse estimation of the precision matrix `Θ = Σ⁻¹` of the stacked
//! latent vector, and recovery of the VAR parameters from it.
//!
//! The support of `Θ` is selected column by column, either by neighbourhood
//! Lasso or by CLIME, followed by hard thresholding at `τ`. The values are
//! then refitted on the selected support,
//!
//! ```text
//! Θ^(i) = B_i (B_i' Σ B_i)⁻¹ B_i' e_i,     Θ = ½ (C + C'),
//! ```
//!
//! and the autoregressive matrix and innovation covariance follow from the
//! leading block row: `Σε = Θ₁₁⁻¹`, `A = −Σε Θ₁₂`.

mod clime;
mod lasso;

pub use clime::{clime_column, constraint_violation as clime_constraint_violation};
pub use lasso::{kkt_violation as lasso_kkt_violation, lasso_neighborhood};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rank_scaling::{psd_repair, ScalingMatrix, DEFAULT_EIGEN_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Clime,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lasso => "lasso",
            Method::Clime => "clime",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(Method::Lasso),
            "clime" => Ok(Method::Clime),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Symmetric zero/nonzero pattern of `Θ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    dim: usize,
    mask: Vec<bool>,
}

impl SupportPattern {
    /// Pattern with `f(row, col)`, OR-symmetrised and with the diagonal set.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = vec![false; dim * dim];
        for c in 0..dim {
            for r in 0..dim {
                if r == c || f(r, c) || f(c, r) {
                    mask[c * dim + r] = true;
                }
            }
        }
        Self { dim, mask }
    }

    pub fn full(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| true)
    }

    pub fn diagonal(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| false)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[col * self.dim + row]
    }

    /// Row indices selected in column `col`, ascending.
    pub fn column(&self, col: usize) -> Vec<usize> {
        (0..self.dim).filter(|&r| self.contains(r, col)).collect()
    }

    /// Number of selected off-diagonal entries.
    pub fn off_diagonal_count(&self) -> usize {
        (0..self.dim)
            .flat_map(|c| (0..self.dim).map(move |r| (r, c)))
            .filter(|&(r, c)| r != c && self.contains(r, c))
            .count()
    }

    /// Copy with the leading `k × k` block fully selected.
    pub fn with_full_leading_block(&self, k: usize) -> Self {
        Self::from_fn(self.dim, |r, c| self.contains(r, c) || (r < k && c < k))
    }
}

/// Thresholds the raw column estimates: entry `(j, i)` survives iff
/// `|raw_i[j]| ≥ τ`. The diagonal is always kept and the result is
/// OR-symmetrised. `τ = 0` keeps everything.
pub fn threshold_support(raw_columns: &[Vector], tau: f64) -> SupportPattern {
    let dim = raw_columns.len();
    SupportPattern::from_fn(dim, |r, c| raw_columns[c][r].abs() >= tau)
}

/// Refitted, symmetric precision estimate on a support pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrecision {
    theta: Matrix,
    support: SupportPattern,
    block_size: usize,
    p: usize,
}

impl SparsePrecision {
    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn support(&self) -> &SupportPattern {
        &self.support
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Leading `K × K` block.
    pub fn theta11(&self) -> Matrix {
        let k = self.block_size;
        self.theta.view((0, 0), (k, k)).into_owned()
    }

    /// The `K × pK` strip to the right of the leading block.
    pub fn theta12(&self) -> Matrix {
        let k = self.block_size;
        self.theta.view((0, k), (k, self.p * k)).into_owned()
    }
}

/// Refits `Θ` column by column on `support` and symmetrises.
pub fn refit_precision(sigma: &ScalingMatrix, support: &SupportPattern) -> Result<SparsePrecision> {
    let s = sigma.sigma();
    let d = s.nrows();
    if support.dim() != d {
        return Err(Error::invalid(format!(
            "support dimension {} does not match scaling matrix {d}",
            support.dim()
        )));
    }
    let columns: Vec<Vec<(usize, f64)>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let idx = support.column(i);
            let sub = linalg::submatrix(s, &idx, &idx);
            let pos = idx.iter().position(|&r| r == i).expect("diagonal is always selected");
            let mut e = Vector::zeros(idx.len());
            e[pos] = 1.0;
            let y = linalg::solve_symmetric(&sub, &e).ok_or(Error::RefitSingular { column: i })?;
            Ok(idx.into_iter().zip(y.iter().copied()).collect())
        })
        .collect::<Result<_>>()?;
    let mut c = Matrix::zeros(d, d);
    for (i, col) in columns.iter().enumerate() {
        for &(r, v) in col {
            c[(r, i)] = v;
        }
    }
    let theta = (&c + c.transpose()) * 0.5;
    Ok(SparsePrecision {
        theta,
        support: support.clone(),
        block_size: sigma.block_size(),
        p: sigma.p(),
    })
}

/// Autoregressive coefficients and innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct VarParams {
    /// `K × pK`, most recent lag first.
    pub a: Matrix,
    pub sigma_eps: Matrix,
    /// Spectral radius of the companion matrix of `a`.
    pub spectral_radius: f64,
}

impl VarParams {
    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols() / self.a.nrows().max(1)
    }
}

/// `K·p × K·p` companion matrix of a `K × pK` coefficient strip.
pub fn companion(a: &Matrix) -> Matrix {
    let k = a.nrows();
    let kp = a.ncols();
    let mut f = Matrix::zeros(kp, kp);
    f.view_mut((0, 0), (k, kp)).copy_from(a);
    for r in k..kp {
        f[(r, r - k)] = 1.0;
    }
    f
}

pub fn var_params(theta: &SparsePrecision) -> Result<VarParams> {
    let mut sigma_eps = linalg::inverse(&theta.theta11()).ok_or(Error::Theta11Singular)?;
    linalg::symmetrize_in_place(&mut sigma_eps);
    let a = -(&sigma_eps * theta.theta12());
    let spectral_radius = linalg::spectral_radius(&companion(&a));
    Ok(VarParams {
        a,
        sigma_eps,
        spectral_radius,
    })
}

/// Column-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub clime_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lasso_tol: lasso::DEFAULT_TOL,
            lasso_max_iter: lasso::DEFAULT_MAX_ITER,
            clime_tol: clime::DEFAULT_TOL,
        }
    }
}

/// Raw (unthresholded) column estimates for every coordinate.
pub fn raw_columns(sigma: &Matrix, method: Method, lambda: f64, opts: &SolverOptions) -> Result<Vec<Vector>> {
    (0..sigma.nrows())
        .into_par_iter()
        .map(|i| match method {
            Method::Lasso => lasso_neighborhood(sigma, i, lambda, opts.lasso_tol, opts.lasso_max_iter),
            Method::Clime => clime_column(sigma, i, lambda, opts.clime_tol),
        })
        .collect()
}

/// Column problems, thresholding and refit in one pass.
pub fn estimate_precision(
    sigma: &ScalingMatrix,
    method: Method,
    lambda: f64,
    tau: f64,
    opts: &SolverOptions,
) -> Result<SparsePrecision> {
    let support = select_support(sigma, method, lambda, tau, opts)?;
    refit_precision(sigma, &support)
}

/// Support selection alone. With `τ = 0` every entry passes the threshold,
/// so the column problems are skipped.
pub fn select_support(
    sigma: &ScalingMatrix,
    method: Method,
    lambda: f64,
    tau: f64,
    opts: &SolverOptions,
) -> Result<SupportPattern> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(SupportPattern::full(sigma.dim()));
    }
    let raw = raw_columns(sigma.sigma(), method, lambda, opts)?;
    Ok(threshold_support(&raw, tau))
}

/// Full estimation settings: method, penalty, threshold and the PSD policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub method: Method,
    pub lambda: f64,
    pub tau: f64,
    /// Eigenvalue floor for PSD repair; `None` uses the raw estimate.
    pub psd_floor: Option<f64>,
    pub solver: SolverOptions,
}

impl PrecisionConfig {
    /// `τ = 2λ`, with PSD repair for Lasso only.
    pub fn new(method: Method, lambda: f64) -> Self {
        Self {
            method,
            lambda,
            tau: 2.0 * lambda,
            psd_floor: match method {
                Method::Lasso => Some(DEFAULT_EIGEN_FLOOR),
                Method::Clime => None,
            },
            solver: SolverOptions::default(),
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// The scaling matrix the estimator actually works on.
    pub fn prepare(&self, sigma: &ScalingMatrix) -> ScalingMatrix {
        match self.psd_floor {
            Some(floor) => psd_repair(sigma, floor),
            None => sigma.clone(),
        }
    }

    pub fn fit(&self, sigma: &ScalingMatrix) -> Result<SparsePrecision> {
        let prepared = self.prepare(sigma);
        estimate_precision(&prepared, self.method, self.lambda, self.tau, &self.solver)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaling(m: Matrix, k: usize) -> ScalingMatrix {
        let p = m.nrows() / k - 1;
        ScalingMatrix::new(m, k, p).unwrap()
    }

    fn tridiagonal_theta(d: usize) -> Matrix {
        Matrix::from_fn(d, d, |r, c| match r.abs_diff(c) {
            0 => 2.0,
            1 => -0.6,
            _ => 0.0,
        })
    }

    #[test]
    fn threshold_examples() {
        let cols = vec![
            Vector::from_vec(vec![1.0, 0.3, 0.0]),
            Vector::from_vec(vec![-0.05, 1.0, 0.0]),
            Vector::from_vec(vec![0.0, 0.0, 1.0]),
        ];
        let s = threshold_support(&cols, 0.1);
        assert!(s.contains(1, 0) && s.contains(0, 1));
        assert!(!s.contains(2, 0) && !s.contains(0, 2));
        assert_eq!(s.off_diagonal_count(), 2);

        let tiny = vec![Vector::from_vec(vec![0.01, 0.02]), Vector::from_vec(vec![0.02, 0.01])];
        assert_eq!(threshold_support(&tiny, 0.5), SupportPattern::diagonal(2));
        assert_eq!(threshold_support(&tiny, 0.001), SupportPattern::full(2));
    }

    #[test]
    fn full_support_refit_is_dense_inverse() {
        let theta = tridiagonal_theta(4);
        let sigma = linalg::sym_inverse(&theta).unwrap();
        let fit = refit_precision(&scaling(sigma.clone(), 2), &SupportPattern::full(4)).unwrap();
        let dense = linalg::sym_inverse(&sigma).unwrap();
        assert!((fit.theta() - dense).amax() < 1e-8);
    }

    #[test]
    fn diagonal_refit() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 4.0, 5.0]));
        let fit = refit_precision(&scaling(d, 2), &SupportPattern::diagonal(4)).unwrap();
        let expect = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.5, 0.25, 0.2]));
        assert!((fit.theta() - expect).amax() < 1e-15);
    }

    #[test]
    fn tridiagonal_support_matches_restricted_solves() {
        let theta = tridiagonal_theta(4);
        let sigma = linalg::sym_inverse(&theta).unwrap();
        let support = SupportPattern::from_fn(4, |r, c| r.abs_diff(c) <= 1);
        let fit = refit_precision(&scaling(sigma.clone(), 2), &support).unwrap();
        // Each column from an independent Gaussian-elimination solve.
        let mut cols = Matrix::zeros(4, 4);
        for i in 0..4usize {
            let idx: Vec<usize> = (0..4usize).filter(|&r| r.abs_diff(i) <= 1).collect();
            let sub = linalg::submatrix(&sigma, &idx, &idx);
            let mut e = Vector::zeros(idx.len());
            e[idx.iter().position(|&r| r == i).unwrap()] = 1.0;
            let y = sub.clone().lu().solve(&e).unwrap();
            for (k, &r) in idx.iter().enumerate() {
                cols[(r, i)] = y[k];
            }
        }
        let expect = (&cols + cols.transpose()) * 0.5;
        assert!((fit.theta() - &expect).amax() < 1e-10);
        // true support: the restricted refit recovers the population inverse
        assert!((fit.theta() - theta).amax() < 1e-10);
        assert_eq!(fit.theta()[(0, 2)], 0.0);
        assert_eq!(fit.theta()[(3, 0)], 0.0);
    }

    #[test]
    fn refit_singular_reported() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = refit_precision(&scaling(s, 1), &SupportPattern::full(2)).unwrap_err();
        assert!(matches!(err, Error::RefitSingular { .. }));
    }

    #[test]
    fn var_params_trivial_cases() {
        let id = SparsePrecision {
            theta: Matrix::identity(4, 4),
            support: SupportPattern::diagonal(4),
            block_size: 2,
            p: 1,
        };
        let v = var_params(&id).unwrap();
        assert_eq!(v.a, Matrix::zeros(2, 2));
        assert_eq!(v.sigma_eps, Matrix::identity(2, 2));
    }

    #[test]
    fn var_params_tridiagonal_blocks() {
        // Θ₁₁ and Θ₁₂ tridiagonal, K = 4.
        let k = 4;
        let t11 = tridiagonal_theta(k);
        let t12 = Matrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
            0 => -0.3,
            1 => 0.1,
            _ => 0.0,
        });
        let mut theta = Matrix::zeros(2 * k, 2 * k);
        theta.view_mut((0, 0), (k, k)).copy_from(&t11);
        theta.view_mut((0, k), (k, k)).copy_from(&t12);
        theta.view_mut((k, 0), (k, k)).copy_from(&t12.transpose());
        theta.view_mut((k, k), (k, k)).copy_from(&t11);
        let sp = SparsePrecision {
            theta,
            support: SupportPattern::full(2 * k),
            block_size: k,
            p: 1,
        };
        let v = var_params(&sp).unwrap();
        let inv = t11.clone().lu().try_inverse().unwrap();
        assert!((&v.sigma_eps - &inv).amax() < 1e-12);
        assert!((&v.a + &inv * &t12).amax() < 1e-12);
        assert!(((&v.sigma_eps * &t11) - Matrix::identity(k, k)).amax() < 1e-10);
    }

    #[test]
    fn estimate_identity_and_dense_paths() {
        let id = scaling(Matrix::identity(4, 4), 2);
        let fit = estimate_precision(&id, Method::Lasso, 0.1, 0.2, &SolverOptions::default()).unwrap();
        assert_eq!(fit.theta(), &Matrix::identity(4, 4));
        let fit = estimate_precision(&id, Method::Clime, 0.1, 0.2, &SolverOptions::default()).unwrap();
        assert_eq!(fit.theta(), &Matrix::identity(4, 4));

        let sigma = linalg::sym_inverse(&tridiagonal_theta(4)).unwrap();
        let fit = estimate_precision(&scaling(sigma.clone(), 2), Method::Lasso, 0.0, 0.0, &SolverOptions::default()).unwrap();
        assert!((fit.theta() - linalg::sym_inverse(&sigma).unwrap()).amax() < 1e-8);
    }

    #[test]
    fn leading_block_override() {
        let s = SupportPattern::diagonal(4).with_full_leading_block(2);
        assert!(s.contains(0, 1) && s.contains(1, 0));
        assert!(!s.contains(0, 2));
    }
}
