//! Cluster-structured VAR simulations and benchmark metrics.
//!
//! Each of `K̃` independent clusters of `N` variables follows
//! `X_t = Ã X_{t−1} + H̃ e_t` with `Ã` lower triangular and constant equal to
//! `a`, and `H̃` encoding the contemporaneous causal structure. The observed
//! panel is `Z_t = S X_t` with `S` the inverse stationary standard
//! deviations, so every column has unit variance.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::panel::{build_lagged, Panel};
use crate::pc::{self, Cpdag, EdgeType, PcConfig};
use crate::rank_scaling::scaling_matrix;
use crate::sparse_precision::{var_params, Method, PrecisionConfig};
use crate::tuning::{cross_validate, CvPlan};

pub const BURN_IN: usize = 500;
/// Significance level of the near-deterministic population tests.
pub const REFERENCE_ALPHA: f64 = 1.0 - 1e-13;
/// Plug-in sample size for the population tests; any value works because
/// exact conditional independencies give partial correlations at rounding level.
const REFERENCE_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Chain,
    CommonCause,
    VStructure,
    Diamond1,
    Diamond2,
    /// Three unrelated variables.
    Independent,
}

impl Structure {
    pub const BENCHMARKS: [Structure; 5] = [
        Structure::Chain,
        Structure::CommonCause,
        Structure::VStructure,
        Structure::Diamond1,
        Structure::Diamond2,
    ];

    /// Variables per cluster.
    pub fn size(self) -> usize {
        match self {
            Structure::Diamond1 | Structure::Diamond2 => 4,
            _ => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Structure::Chain => "chain",
            Structure::CommonCause => "common_cause",
            Structure::VStructure => "v_structure",
            Structure::Diamond1 => "diamond1",
            Structure::Diamond2 => "diamond2",
            Structure::Independent => "independent",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        [
            Structure::Chain,
            Structure::CommonCause,
            Structure::VStructure,
            Structure::Diamond1,
            Structure::Diamond2,
            Structure::Independent,
        ]
        .into_iter()
        .find(|st| st.label() == norm)
        .ok_or_else(|| Error::invalid(format!("unknown structure '{s}'")))
    }
}

/// Contemporaneous impact matrix `H̃ = (I − D̃)⁻¹` with unit edge weights.
///
/// * chain `1 → 2 → 3`
/// * common cause: `2` causes `1` and `3`
/// * v-structure `1 → 3 ← 2`
/// * diamond 1: `1 → 3 ← 2`, `1 → 4 ← 2`
/// * diamond 2: `1 → 3 ← 2`, `3 → 4`
pub fn structure_h(structure: Structure) -> Matrix {
    let rows: &[f64] = match structure {
        Structure::Chain => &[1., 0., 0., 1., 1., 0., 1., 1., 1.],
        Structure::CommonCause => &[1., 1., 0., 0., 1., 0., 0., 1., 1.],
        Structure::VStructure => &[1., 0., 0., 0., 1., 0., 1., 1., 1.],
        Structure::Diamond1 => &[
            1., 0., 0., 0., //
            0., 1., 0., 0., //
            1., 1., 1., 0., //
            1., 1., 0., 1.,
        ],
        Structure::Diamond2 => &[
            1., 0., 0., 0., //
            0., 1., 0., 0., //
            1., 1., 1., 0., //
            1., 1., 1., 1.,
        ],
        Structure::Independent => &[1., 0., 0., 0., 1., 0., 0., 0., 1.],
    };
    let n = structure.size();
    Matrix::from_row_slice(n, n, rows)
}

/// Stationary variance solving `Γ = A Γ A' + Σε`.
pub fn lyapunov_variance(a: &Matrix, sigma_eps: &Matrix) -> Result<Matrix> {
    linalg::lyapunov_variance(a, sigma_eps).map_err(|e| match e {
        Error::Nonstationary { spectral_radius } => Error::UnstableAutoregression { spectral_radius },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub structure: Structure,
    pub a: f64,
    pub n_clusters: usize,
    pub n: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn k(&self) -> usize {
        self.structure.size() * self.n_clusters
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.a) {
            return Err(Error::invalid(format!("persistence a must lie in [0, 1), got {}", self.a)));
        }
        if self.n_clusters == 0 {
            return Err(Error::invalid("need at least one cluster"));
        }
        if self.n < 4 {
            return Err(Error::invalid("need at least 4 observations"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub a_true: Matrix,
    pub sigma_eps_true: Matrix,
    pub theta11_true: Matrix,
    /// Stationary variance of `Z_t` (unit diagonal).
    pub gamma_true: Matrix,
    pub reference_cpdag: Cpdag,
}

/// Exact cluster quantities: `Ã`, `H̃`, `S̃` and the standardised `A`, `Σε`.
struct ClusterModel {
    a_tilde: Matrix,
    h_tilde: Matrix,
    gamma_x: Matrix,
    s: Vec<f64>,
}

fn cluster_model(structure: Structure, a: f64) -> Result<ClusterModel> {
    let n = structure.size();
    let a_tilde = Matrix::from_fn(n, n, |r, c| if c <= r { a } else { 0.0 });
    let h_tilde = structure_h(structure);
    let gamma_x = lyapunov_variance(&a_tilde, &(&h_tilde * h_tilde.transpose()))?;
    let s = (0..n).map(|i| 1.0 / gamma_x[(i, i)].sqrt()).collect();
    Ok(ClusterModel {
        a_tilde,
        h_tilde,
        gamma_x,
        s,
    })
}

fn node_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{i}")).collect()
}

/// Draws the panel and the exact parameters of a design.
pub fn generate_cluster_var(design: &SimDesign) -> Result<(Panel, SimTruth)> {
    design.validate()?;
    let cm = cluster_model(design.structure, design.a)?;
    let m = design.structure.size();
    let k = design.k();
    let nc = design.n_clusters;

    let s_diag = Vector::from_fn(k, |i, _| cm.s[i % m]);
    let s = Matrix::from_diagonal(&s_diag);
    let s_inv = Matrix::from_diagonal(&s_diag.map(|v| 1.0 / v));
    let blocks = |b: &Matrix| linalg::block_diagonal(&vec![b.clone(); nc]);
    let a_true = &s * blocks(&cm.a_tilde) * &s_inv;
    let h_block = blocks(&cm.h_tilde);
    let mut sigma_eps_true = &s * &h_block * h_block.transpose() * &s;
    linalg::symmetrize_in_place(&mut sigma_eps_true);
    let theta11_true = linalg::sym_inverse(&sigma_eps_true).ok_or(Error::Theta11Singular)?;
    let mut gamma_true = &s * blocks(&cm.gamma_x) * &s;
    linalg::symmetrize_in_place(&mut gamma_true);

    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let root = linalg::sym_sqrt(&cm.gamma_x);
    let mut state: Vec<Vector> = (0..nc)
        .map(|_| &root * Vector::from_fn(m, |_, _| normal()))
        .collect();
    let mut data = Matrix::zeros(design.n, k);
    for t in 0..BURN_IN + design.n {
        for (c, x) in state.iter_mut().enumerate() {
            let e = Vector::from_fn(m, |_, _| normal());
            *x = &cm.a_tilde * &*x + &cm.h_tilde * e;
            if t >= BURN_IN {
                for i in 0..m {
                    data[(t - BURN_IN, c * m + i)] = cm.s[i] * x[i];
                }
            }
        }
    }
    let panel = Panel::new(data, node_names(k))?;
    let reference_cpdag = reference_cpdag_clusters(design.structure, nc)?;
    Ok((
        panel,
        SimTruth {
            a_true,
            sigma_eps_true,
            theta11_true,
            gamma_true,
            reference_cpdag,
        },
    ))
}

/// Population PC class of one cluster.
pub fn reference_cpdag(structure: Structure) -> Result<Cpdag> {
    let h = structure_h(structure);
    let sigma = &h * h.transpose();
    let cfg = PcConfig::new(REFERENCE_ALPHA)?;
    pc::pc(&sigma, pc::default_names(structure.size()), REFERENCE_N, &cfg)
}

/// Reference class of `n_clusters` independent copies, nodes numbered
/// cluster by cluster.
pub fn reference_cpdag_clusters(structure: Structure, n_clusters: usize) -> Result<Cpdag> {
    let one = reference_cpdag(structure)?;
    let m = structure.size();
    let mut g = Cpdag::empty(node_names(m * n_clusters));
    for c in 0..n_clusters {
        let off = c * m;
        for (a, b, directed) in one.edges() {
            if directed {
                g.add_directed(off + a, off + b);
            } else {
                g.add_undirected(off + a, off + b);
            }
        }
    }
    Ok(g)
}

/// Number of unordered node pairs whose edge type differs.
pub fn shd(g1: &Cpdag, g2: &Cpdag) -> Result<usize> {
    if g1.k() != g2.k() {
        return Err(Error::NodeMismatch);
    }
    let k = g1.k();
    let mut count = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            if g1.edge_type(i, j) != g2.edge_type(i, j) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Off-diagonal support counts; ordered pairs, so each symmetric entry
/// counts twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Estimated nonzeros.
    pub tp_fp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub const SUPPORT_TOL: f64 = 1e-6;

pub fn support_confusion(theta_hat: &Matrix, theta_true: &Matrix, tol: f64) -> Result<Confusion> {
    if theta_hat.shape() != theta_true.shape() {
        return Err(Error::invalid("support_confusion: dimension mismatch"));
    }
    let k = theta_hat.nrows();
    let mut c = Confusion { tp_fp: 0, fp: 0, fn_: 0 };
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let est = theta_hat[(i, j)].abs() > tol;
            let truth = theta_true[(i, j)].abs() > tol;
            c.tp_fp += usize::from(est);
            c.fp += usize::from(est && !truth);
            c.fn_ += usize::from(!est && truth);
        }
    }
    Ok(c)
}

/// How the penalty of each replication is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum LambdaPolicy {
    Fixed(f64),
    /// Cross-validated `λ` times a multiplier (1 for plain CV).
    Cv(f64),
    /// Shortcut: the mean of two previously cross-validated penalties.
    PairedAverage(f64, f64),
    /// No sparsity: full support (`τ = 0`).
    Dense,
    /// PC on the contemporaneous correlation, ignoring the dynamics.
    ZeroA,
}

impl LambdaPolicy {
    pub fn label(&self) -> String {
        match self {
            LambdaPolicy::Fixed(l) => format!("fixed({l})"),
            LambdaPolicy::Cv(m) if *m == 1.0 => "cv".into(),
            LambdaPolicy::Cv(m) => format!("cv*{m}"),
            LambdaPolicy::PairedAverage(a, b) => format!("paired({a},{b})"),
            LambdaPolicy::Dense => "lambda0".into(),
            LambdaPolicy::ZeroA => "a0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub method: Method,
    pub policy: LambdaPolicy,
    pub reps: usize,
    pub restricted_pc: bool,
    pub alpha: f64,
    pub p: usize,
    pub n_folds: usize,
}

impl BenchConfig {
    pub fn new(method: Method, policy: LambdaPolicy, reps: usize) -> Self {
        Self {
            method,
            policy,
            reps,
            restricted_pc: true,
            alpha: PcConfig::default().alpha,
            p: 1,
            n_folds: crate::tuning::DEFAULT_FOLDS,
        }
    }
}

/// Metrics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub seed: u64,
    pub lambda: f64,
    pub shd: usize,
    pub confusion: Option<Confusion>,
    pub a_dist: f64,
    pub sigma_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Stat { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub design: SimDesign,
    pub config: BenchConfig,
    pub lambda: Stat,
    pub shd: Stat,
    pub tp_fp: Option<Stat>,
    pub fp: Option<Stat>,
    pub fn_: Option<Stat>,
    pub a_dist: Stat,
    pub sigma_dist: Stat,
    pub reps: Vec<RepResult>,
}

/// One replication: simulate, estimate, discover, compare.
pub fn run_replication(design: &SimDesign, config: &BenchConfig) -> Result<RepResult> {
    let (panel, truth) = generate_cluster_var(design)?;
    let names = panel.names().to_vec();
    let pc_base = PcConfig::new(config.alpha)?;

    if config.policy == LambdaPolicy::ZeroA {
        let w = build_lagged(&panel, 0)?;
        let sigma = scaling_matrix(&w)?.sigma().clone();
        let g = pc::pc(&sigma, names, panel.n(), &pc_base)?;
        return Ok(RepResult {
            seed: design.seed,
            lambda: 0.0,
            shd: shd(&g, &truth.reference_cpdag)?,
            confusion: None,
            a_dist: linalg::op_norm(&truth.a_true),
            sigma_dist: linalg::op_norm(&(&sigma - &truth.sigma_eps_true)),
        });
    }

    let base = PrecisionConfig::new(config.method, 0.1);
    let (lambda, tau) = match config.policy {
        LambdaPolicy::Fixed(l) => (l, 2.0 * l),
        LambdaPolicy::PairedAverage(a, b) => (0.5 * (a + b), a + b),
        LambdaPolicy::Dense => (0.0, 0.0),
        LambdaPolicy::Cv(mult) => {
            let plan = CvPlan {
                n_folds: config.n_folds,
                lambda_grid: None,
            };
            let l = cross_validate(&panel, config.p, &base, &plan)?.lambda * mult;
            (l, 2.0 * l)
        }
        LambdaPolicy::ZeroA => unreachable!(),
    };
    let cfg = PrecisionConfig { lambda, tau, ..base };
    let w = build_lagged(&panel, config.p)?;
    let fit = cfg.fit(&scaling_matrix(&w)?)?;
    let params = var_params(&fit)?;
    let theta11 = fit.theta11();
    let mut pc_cfg = pc_base;
    if config.restricted_pc {
        pc_cfg = pc_cfg.with_fixed_gaps(pc::fixed_gaps_from_theta11(&theta11));
    }
    let g = pc::pc(&params.sigma_eps, names, w.rows(), &pc_cfg)?;
    let k = panel.k();
    let a_hat_lag1 = params.a.view((0, 0), (k, k)).into_owned();
    Ok(RepResult {
        seed: design.seed,
        lambda,
        shd: shd(&g, &truth.reference_cpdag)?,
        confusion: Some(support_confusion(&theta11, &truth.theta11_true, SUPPORT_TOL)?),
        a_dist: linalg::op_norm(&(&a_hat_lag1 - &truth.a_true)),
        sigma_dist: linalg::op_norm(&(&params.sigma_eps - &truth.sigma_eps_true)),
    })
}

/// Replications `seed, seed + 1, …` and their summary.
pub fn run_benchmark(design: &SimDesign, config: &BenchConfig) -> Result<BenchRow> {
    if config.reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let reps: Vec<RepResult> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let d = SimDesign {
                seed: design.seed.wrapping_add(r as u64),
                ..*design
            };
            run_replication(&d, config)
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&RepResult) -> f64| Stat::of(&reps.iter().map(f).collect::<Vec<_>>());
    let has_conf = reps.iter().all(|r| r.confusion.is_some());
    let conf = |f: fn(&Confusion) -> usize| has_conf.then(|| col(&|r| f(r.confusion.as_ref().unwrap()) as f64));
    Ok(BenchRow {
        design: *design,
        config: config.clone(),
        lambda: col(&|r| r.lambda),
        shd: col(&|r| r.shd as f64),
        tp_fp: conf(|c| c.tp_fp),
        fp: conf(|c| c.fp),
        fn_: conf(|c| c.fn_),
        a_dist: col(&|r| r.a_dist),
        sigma_dist: col(&|r| r.sigma_dist),
        reps,
    })
}

/// Benchmark table: one line per row, mean and standard error per cell.
pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "structure", "k", "a", "n", "method", "policy", "restricted", "reps", "lambda_mean", "shd_mean",
        "shd_se", "tp_fp_mean", "tp_fp_se", "fp_mean", "fp_se", "fn_mean", "fn_se", "a_dist_mean",
        "a_dist_se", "sigma_dist_mean", "sigma_dist_se",
    ])?;
    let f = |v: f64| format!("{v:.6}");
    let opt = |s: &Option<Stat>| match s {
        Some(s) => [f(s.mean), f(s.se)],
        None => [String::new(), String::new()],
    };
    for r in rows {
        let [tm, ts] = opt(&r.tp_fp);
        let [fpm, fps] = opt(&r.fp);
        let [fnm, fns] = opt(&r.fn_);
        w.write_record([
            r.design.structure.to_string(),
            r.design.k().to_string(),
            r.design.a.to_string(),
            r.design.n.to_string(),
            r.config.method.to_string(),
            r.config.policy.label(),
            r.config.restricted_pc.to_string(),
            r.config.reps.to_string(),
            f(r.lambda.mean),
            f(r.shd.mean),
            f(r.shd.se),
            tm,
            ts,
            fpm,
            fps,
            fnm,
            fns,
            f(r.a_dist.mean),
            f(r.a_dist.se),
            f(r.sigma_dist.mean),
            f(r.sigma_dist.se),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Gaussian VAR(p) draws `Z_t = Σ_j A_j Z_{t−j} + ε_t` from the stationary
/// start, for tests and benchmarks of the estimators.
pub fn simulate_var(a: &Matrix, sigma_eps: &Matrix, n: usize, seed: u64) -> Result<Panel> {
    let k = a.nrows();
    let f = crate::sparse_precision::companion(a);
    let dim = f.nrows();
    let mut q = Matrix::zeros(dim, dim);
    q.view_mut((0, 0), (k, k)).copy_from(sigma_eps);
    let gamma = lyapunov_variance(&f, &q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let root = linalg::sym_sqrt(&gamma);
    let chol = sigma_eps
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("innovation covariance must be positive definite"))?
        .l();
    let mut state = &root * Vector::from_fn(dim, |_, _| normal());
    let mut data = Matrix::zeros(n, k);
    for t in 0..BURN_IN + n {
        let eps = &chol * Vector::from_fn(k, |_, _| normal());
        let mut next = &f * &state;
        for r in 0..k {
            next[r] += eps[r];
        }
        state = next;
        if t >= BURN_IN {
            for r in 0..k {
                data[(t - BURN_IN, r)] = state[r];
            }
        }
    }
    Panel::new(data, node_names(k))
}

/// Edge type shorthand used by the property tests.
pub fn edge_types(g: &Cpdag) -> Vec<EdgeType> {
    let k = g.k();
    (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .map(|(i, j)| g.edge_type(i, j))
        .collect()
}
