//! Penalty selection by blocked cross-validation and lag order by AIC.
//!
//! The panel is cut into contiguous, non-overlapping folds. Each fold is
//! scored on its own scaling matrix with the Gaussian negative
//! log-likelihood `tr(Σ_test Θ) − ln det Θ`, where `Θ` is fitted on the lagged
//! rows of the remaining folds (lag windows never straddle a removed fold).

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::panel::{build_lagged, LaggedDesign, Panel};
use crate::rank_scaling::{scaling_matrix, ScalingMatrix};
use crate::sparse_precision::{refit_precision, select_support, var_params, PrecisionConfig};

pub const DEFAULT_FOLDS: usize = 5;
/// Starting penalty of the `λ₀` search.
pub const LAMBDA_START: f64 = 0.10;
/// Off-diagonal magnitude treated as zero by the `λ₀` search.
pub const ZERO_TOL: f64 = 1e-6;
const MAX_SWEEP: usize = 30;
const GRID_LEVELS: i32 = 5;

/// `tr(Σ_test Θ) − ln det Θ`.
pub fn cv_score(theta: &Matrix, sigma_test: &Matrix) -> Result<f64> {
    if theta.shape() != sigma_test.shape() {
        return Err(Error::invalid("cv_score: dimension mismatch"));
    }
    let log_det = linalg::log_det_spd(theta).ok_or(Error::InvalidPrecision)?;
    let trace = sigma_test.component_mul(&theta.transpose()).sum();
    Ok(trace - log_det)
}

/// `tr(Σ_test Θ) − ln |det Θ|` for a symmetric `Θ` of any inertia.
///
/// The thresholded refit is not guaranteed to be positive definite once the
/// support drops true entries. Cross-validation scores such fits through the
/// determinant modulus instead of discarding them; a singular `Θ` scores `+∞`.
pub fn cv_score_modulus(theta: &Matrix, sigma_test: &Matrix) -> Result<f64> {
    if theta.shape() != sigma_test.shape() {
        return Err(Error::invalid("cv_score: dimension mismatch"));
    }
    let eig = theta.clone().symmetric_eigen().eigenvalues;
    if eig.iter().any(|v| !v.is_finite() || *v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let log_det: f64 = eig.iter().map(|v| v.abs().ln()).sum();
    let trace = sigma_test.component_mul(&theta.transpose()).sum();
    Ok(trace - log_det)
}

fn offdiag_theta11_vanishes(sigma: &ScalingMatrix, base: &PrecisionConfig, lambda: f64) -> Result<bool> {
    let cfg = PrecisionConfig { lambda, tau: 2.0 * lambda, ..*base };
    let t11 = cfg.fit(sigma)?.theta11();
    let k = t11.nrows();
    Ok((0..k).all(|i| (0..k).all(|j| i == j || t11[(i, j)].abs() < ZERO_TOL)))
}

/// Smallest `0.10 · 2^j` (`j ∈ ℤ`) at which every off-diagonal entry of
/// `Θ̂₁₁` vanishes: halve from 0.10 while it still does, or double upward
/// first when 0.10 is not yet enough.
pub fn lambda_zero_search(sigma: &ScalingMatrix, base: &PrecisionConfig) -> Result<f64> {
    let mut lambda = LAMBDA_START;
    if offdiag_theta11_vanishes(sigma, base, lambda)? {
        for _ in 0..MAX_SWEEP {
            let next = lambda / 2.0;
            if !offdiag_theta11_vanishes(sigma, base, next)? {
                break;
            }
            lambda = next;
        }
        return Ok(lambda);
    }
    for _ in 0..MAX_SWEEP {
        lambda *= 2.0;
        if offdiag_theta11_vanishes(sigma, base, lambda)? {
            return Ok(lambda);
        }
    }
    log::warn!("lambda_0 search stopped at {lambda} without zeroing theta11");
    Ok(lambda)
}

/// `λ₀/2, λ₀/4, …, λ₀/32`.
pub fn lambda_grid(lambda0: f64) -> Vec<f64> {
    (1..=GRID_LEVELS).map(|j| lambda0 / 2f64.powi(j)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_folds: usize,
    /// Descending penalties; `None` derives the grid from the `λ₀` search.
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            n_folds: DEFAULT_FOLDS,
            lambda_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda0: Option<f64>,
    pub grid: Vec<f64>,
    /// `fold_scores[g][f]`: grid point `g` scored on fold `f`.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
}

/// Contiguous folds of near-equal size (earlier folds take the remainder).
pub fn fold_ranges(n: usize, n_folds: usize) -> Vec<Range<usize>> {
    let base = n / n_folds;
    let extra = n % n_folds;
    let mut start = 0;
    (0..n_folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

struct Fold {
    train: ScalingMatrix,
    test: Matrix,
}

fn prepare_fold(panel: &Panel, p: usize, ranges: &[Range<usize>], f: usize) -> Result<Fold> {
    let r = ranges[f].clone();
    let too_small = || Error::FoldTooSmall { fold: f, rows: r.len() };
    if r.len() < p + 4 {
        return Err(too_small());
    }
    let test_panel = panel.rows(r.clone()).map_err(|_| too_small())?;
    let test = scaling_matrix(&build_lagged(&test_panel, p).map_err(|_| too_small())?)?;
    let complement = [0..r.start, r.end..panel.n()];
    let train = scaling_matrix(&LaggedDesign::from_segments(panel, &complement, p)?)?;
    Ok(Fold {
        train,
        test: test.sigma().clone(),
    })
}

fn score_or_inf(cfg: &PrecisionConfig, fold: &Fold) -> Result<f64> {
    match cfg.fit(&fold.train) {
        Ok(fit) => match cv_score(fit.theta(), &fold.test) {
            Ok(s) => Ok(s),
            Err(Error::InvalidPrecision) => cv_score_modulus(fit.theta(), &fold.test),
            Err(e) => Err(e),
        },
        Err(Error::RefitSingular { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Selects `λ*` from the grid by mean held-out score; `τ* = 2λ*`.
pub fn cross_validate(panel: &Panel, p: usize, base: &PrecisionConfig, plan: &CvPlan) -> Result<CvResult> {
    if plan.n_folds < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    let (lambda0, grid) = match &plan.lambda_grid {
        Some(g) if g.is_empty() => return Err(Error::invalid("empty lambda grid")),
        Some(g) => (None, g.clone()),
        None => {
            let full = scaling_matrix(&build_lagged(panel, p)?)?;
            let l0 = lambda_zero_search(&full, base)?;
            (Some(l0), lambda_grid(l0))
        }
    };
    if grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("lambda grid must be positive"));
    }
    let ranges = fold_ranges(panel.n(), plan.n_folds);
    let folds: Vec<Fold> = (0..plan.n_folds)
        .into_par_iter()
        .map(|f| prepare_fold(panel, p, &ranges, f))
        .collect::<Result<_>>()?;

    let fold_scores: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&lambda| {
            let cfg = PrecisionConfig { lambda, tau: 2.0 * lambda, ..*base };
            folds.iter().map(|fold| score_or_inf(&cfg, fold)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mean_scores: Vec<f64> = fold_scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    // First minimum wins, i.e. the largest penalty among ties.
    let best = mean_scores
        .iter()
        .enumerate()
        .fold(0, |b, (g, &s)| if s < mean_scores[b] { g } else { b });
    Ok(CvResult {
        lambda0,
        lambda: grid[best],
        tau: 2.0 * grid[best],
        grid,
        fold_scores,
        mean_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub p: usize,
    pub log_det_sigma_eps: f64,
    /// Nonzero entries of `Θ̂₁₂`.
    pub df: usize,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicResult {
    pub effective_n: usize,
    pub entries: Vec<AicEntry>,
    pub p: usize,
}

/// `n ln det Σ̄ε + 2 df` for `p = 1..=p_max`, with `Θ₁₁` left unrestricted.
///
/// All orders share one scaling matrix: the lag-`p_max` estimate on the
/// common sample, whose leading `(p+1)K` block serves as the lag-`p` matrix.
/// The candidate models are then nested, and orders whose extra lags select
/// nothing tie exactly, so the smallest of them wins.
pub fn aic_lag_order(panel: &Panel, p_max: usize, base: &PrecisionConfig) -> Result<AicResult> {
    if p_max == 0 {
        return Err(Error::invalid("p_max must be at least 1"));
    }
    let n = panel.n();
    if p_max + 4 > n {
        return Err(Error::InsufficientSample { n, p: p_max });
    }
    let effective_n = n - p_max;
    let k = panel.k();
    let full = scaling_matrix(&build_lagged(panel, p_max)?)?;
    let entries = (1..=p_max)
        .map(|p| {
            let d = (p + 1) * k;
            let leading = ScalingMatrix::new(full.sigma().view((0, 0), (d, d)).into_owned(), k, p)?;
            let sigma = base.prepare(&leading);
            let support = select_support(&sigma, base.method, base.lambda, base.tau, &base.solver)?
                .with_full_leading_block(k);
            let fit = refit_precision(&sigma, &support)?;
            let params = var_params(&fit)?;
            let log_det = linalg::log_det_spd(&params.sigma_eps).ok_or(Error::InvalidPrecision)?;
            let df = fit.theta12().iter().filter(|v| **v != 0.0).count();
            Ok(AicEntry {
                p,
                log_det_sigma_eps: log_det,
                df,
                aic: effective_n as f64 * log_det + 2.0 * df as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = entries
        .iter()
        .fold(&entries[0], |b, e| if e.aic < b.aic { e } else { b })
        .p;
    Ok(AicResult {
        effective_n,
        entries,
        p,
    })
}
