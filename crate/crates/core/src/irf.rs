//! Impulse responses of the copula SVAR.
//!
//! Latent paths follow `Z_{t+s} = A^{s+1} z + Σ_{r<s} Υ_r ξ_{t+s−r} + Υ_s ξ_t`
//! and are mapped to the observation scale through the inverse marginals
//! `F_k⁻¹(Φ(·))`. The Monte-Carlo response averages the shocked path minus the
//! baseline path, both driven by the same draws, so `δ = 0` gives exactly
//! zero. Draw `v` uses its own generator stream, making results independent
//! of the thread count.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::panel::Panel;
use crate::svar::{ma_sequence, StructuralModel};

pub const DEFAULT_DRAWS: usize = 10_000;

/// Sorted sample of one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    sorted: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical marginal needs finite observations"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Latent value of `x`: `Φ⁻¹(r / (n+1))` with `r` the mid-rank of `x`
    /// among the sample (half-integers between observations).
    pub fn to_latent(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        let at_most = self.sorted.partition_point(|&v| v <= x);
        let rank = (below + at_most + 1) as f64 / 2.0;
        Normal::standard().inverse_cdf(rank / (self.n() as f64 + 1.0))
    }
}

/// Truncated empirical quantile `F⁻¹(Φ(z))`.
pub fn marginal_inverse(marginal: &EmpiricalMarginal, z: f64) -> f64 {
    let n = marginal.n() as f64;
    let u = Normal::standard().cdf(z).clamp(1.0 / (n + 1.0), n / (n + 1.0));
    let idx = ((u * n).ceil() as usize).clamp(1, marginal.n());
    marginal.sorted[idx - 1]
}

/// How latent values map to the observation scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginals {
    /// Identity map: the latent process is the observed one.
    Gaussian,
    Empirical(Vec<EmpiricalMarginal>),
}

impl Marginals {
    pub fn from_panel(panel: &Panel) -> Result<Self> {
        let cols = (0..panel.k())
            .map(|c| EmpiricalMarginal::new(panel.values().column(c).as_slice()))
            .collect::<Result<_>>()?;
        Ok(Marginals::Empirical(cols))
    }

    fn inverse(&self, k: usize, z: f64) -> f64 {
        match self {
            Marginals::Gaussian => z,
            Marginals::Empirical(m) => marginal_inverse(&m[k], z),
        }
    }

    fn to_latent(&self, k: usize, x: f64) -> f64 {
        match self {
            Marginals::Gaussian => x,
            Marginals::Empirical(m) => m[k].to_latent(x),
        }
    }
}

/// `H⁻¹ Π Σε (H⁻¹ Π)'` with off-diagonals dropped.
pub fn sigma_xi_from_model(model: &StructuralModel, sigma_eps: &Matrix) -> Matrix {
    let k = model.k();
    let h_inv = Matrix::identity(k, k) - &model.d;
    let t = &h_inv * &model.pi;
    let full = &t * sigma_eps * t.transpose();
    let off = (0..k)
        .flat_map(|r| (0..k).filter(move |&c| c != r).map(move |c| (r, c)))
        .fold(0.0_f64, |acc, (r, c)| acc.max(full[(r, c)].abs()));
    log::debug!("structural innovation covariance: max off-diagonal {off:.3e}");
    Matrix::from_diagonal(&full.diagonal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum IrfMode {
    /// Condition on the last `p` observations, most recent first (`pK` values).
    Conditional { x: Vec<f64> },
    Unconditional,
    /// `δ [Υ_s Π e_l]_k`, optionally with `Σ_ξ^{1/2}` unit-variance scaling.
    Linearized { unit_variance: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrfRequest {
    /// Variable whose structural innovation is shocked.
    pub shock: usize,
    pub response: usize,
    pub delta: f64,
    /// Last horizon `S`; responses are reported for `0..=S`.
    pub horizon: usize,
    pub draws: usize,
    pub seed: u64,
    pub mode: IrfMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrfResult {
    pub shock: usize,
    pub response: usize,
    pub values: Vec<f64>,
    /// Monte-Carlo standard errors; `None` for linearized responses.
    pub stderr: Option<Vec<f64>>,
}

fn check_request(model: &StructuralModel, req: &IrfRequest) -> Result<()> {
    let k = model.k();
    if req.shock >= k || req.response >= k {
        return Err(Error::invalid(format!(
            "shock {} / response {} out of range for {k} variables",
            req.shock, req.response
        )));
    }
    if !req.delta.is_finite() {
        return Err(Error::invalid("shock size must be finite"));
    }
    if !matches!(req.mode, IrfMode::Linearized { .. }) && req.draws == 0 {
        return Err(Error::invalid("Monte-Carlo responses need at least one draw"));
    }
    Ok(())
}

/// First-order response `δ [Υ_s Π e_l]_k` for `s = 0..=S`.
pub fn irf_linearized(model: &StructuralModel, req: &IrfRequest) -> Result<IrfResult> {
    check_request(model, req)?;
    let unit = matches!(req.mode, IrfMode::Linearized { unit_variance: true });
    let pos = model.position(req.shock);
    let scale = if unit { model.sigma_xi[(pos, pos)].max(0.0).sqrt() } else { 1.0 };
    let values = ma_sequence(model, req.horizon)
        .iter()
        .map(|u| req.delta * scale * u[(req.response, pos)])
        .collect();
    Ok(IrfResult {
        shock: req.shock,
        response: req.response,
        values,
        stderr: None,
    })
}

/// Monte-Carlo response of the nonlinear model.
pub fn irf_mc(model: &StructuralModel, marginals: &Marginals, req: &IrfRequest) -> Result<IrfResult> {
    check_request(model, req)?;
    model.ensure_stationary()?;
    let k = model.k();
    let p = model.p();
    let dim = k * p;
    if let Marginals::Empirical(m) = marginals {
        if m.len() != k {
            return Err(Error::invalid("one marginal per variable is required"));
        }
    }

    let f = model.companion();
    let impact = model.impact();
    let xi_sd: Vec<f64> = (0..k).map(|r| model.sigma_xi[(r, r)].max(0.0).sqrt()).collect();
    let pos = model.position(req.shock);

    enum Start {
        Fixed(Vector),
        Random(Matrix),
    }
    let start = match &req.mode {
        IrfMode::Conditional { x } => {
            if x.len() != dim {
                return Err(Error::invalid(format!(
                    "conditioning point has {} values, expected {dim} (p * K)",
                    x.len()
                )));
            }
            Start::Fixed(Vector::from_fn(dim, |i, _| marginals.to_latent(i % k, x[i])))
        }
        IrfMode::Unconditional => {
            let mut q = Matrix::zeros(dim, dim);
            q.view_mut((0, 0), (k, k)).copy_from(&model.implied_sigma_eps());
            let gamma = linalg::lyapunov_variance(&f, &q)?;
            Start::Random(linalg::sym_sqrt(&gamma))
        }
        IrfMode::Linearized { .. } => {
            return Err(Error::invalid("linearized mode is handled by irf_linearized"));
        }
    };

    let horizons = req.horizon + 1;
    let diffs: Vec<Vec<f64>> = (0..req.draws)
        .into_par_iter()
        .map(|v| {
            let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
            rng.set_stream(v as u64);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let z0 = match &start {
                Start::Fixed(z) => z.clone(),
                Start::Random(root) => root * Vector::from_fn(dim, |_, _| normal()),
            };
            let mut shocked = z0.clone();
            let mut base = z0;
            let mut out = Vec::with_capacity(horizons);
            for s in 0..horizons {
                let mut xi = Vector::from_fn(k, |r, _| xi_sd[r] * normal());
                let eps_base;
                let eps_shock;
                if s == 0 {
                    xi[pos] = 0.0;
                    eps_base = &impact * &xi;
                    xi[pos] = req.delta;
                    eps_shock = &impact * &xi;
                } else {
                    eps_base = &impact * &xi;
                    eps_shock = eps_base.clone();
                }
                shocked = step(&f, &shocked, &eps_shock, k);
                base = step(&f, &base, &eps_base, k);
                let r = req.response;
                out.push(marginals.inverse(r, shocked[r]) - marginals.inverse(r, base[r]));
            }
            out
        })
        .collect();

    let m = req.draws as f64;
    let mut values = vec![0.0; horizons];
    let mut stderr = vec![0.0; horizons];
    for s in 0..horizons {
        let mean = diffs.iter().map(|d| d[s]).sum::<f64>() / m;
        let var = if req.draws > 1 {
            diffs.iter().map(|d| (d[s] - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        values[s] = mean;
        stderr[s] = (var / m).sqrt();
    }
    Ok(IrfResult {
        shock: req.shock,
        response: req.response,
        values,
        stderr: Some(stderr),
    })
}

/// One companion step: `state ← F state + (ε, 0, …, 0)`.
fn step(f: &Matrix, state: &Vector, eps: &Vector, k: usize) -> Vector {
    let mut next = f * state;
    for r in 0..k {
        next[r] += eps[r];
    }
    next
}

/// Dispatches on the request mode.
pub fn impulse_response(model: &StructuralModel, marginals: &Marginals, req: &IrfRequest) -> Result<IrfResult> {
    match req.mode {
        IrfMode::Linearized { .. } => irf_linearized(model, req),
        _ => irf_mc(model, marginals, req),
    }
}

/// CSV with columns `horizon, shock, response, value, mc_stderr`.
pub fn write_irf_csv<W: Write>(out: W, names: &[String], results: &[IrfResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "shock", "response", "value", "mc_stderr"])?;
    for r in results {
        for (s, v) in r.values.iter().enumerate() {
            let se = r.stderr.as_ref().map(|e| format!("{:.17e}", e[s])).unwrap_or_default();
            w.write_record([
                s.to_string(),
                names[r.shock].clone(),
                names[r.response].clone(),
                format!("{v:.17e}"),
                se,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
