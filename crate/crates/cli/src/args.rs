use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsdag::sparse_precision::Method;

#[derive(Debug, Parser)]
#[command(name = "tsdag", version, about = "Causal graphs and structural VARs for Gaussian-copula time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scaling matrix, sparse precision and VAR parameters.
    Estimate(RunArgs),
    /// PC discovery on the innovations and, when identified, the structural model.
    Dag(RunArgs),
    /// Impulse responses from a structural model written by `dag`.
    Irf(IrfArgs),
    /// Cross-validated penalty selection.
    Cv(RunArgs),
    /// Lag order by AIC.
    Aic(AicArgs),
    /// Monte-Carlo benchmark table on simulated cluster VARs.
    Simulate(SimArgs),
    /// Replays the run recorded in a manifest into a new output directory.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lasso,
    Clime,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lasso => Method::Lasso,
            MethodArg::Clime => Method::Clime,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV panel: header row, one column per variable, rows in time order.
    #[arg(long)]
    pub input: PathBuf,
    /// Columns to first-difference before estimation (comma separated names).
    #[arg(long, value_delimiter = ',')]
    pub diff: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// VAR order p.
    #[arg(long, default_value_t = 1)]
    pub lags: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Lasso)]
    pub method: MethodArg,
    /// Penalty; required unless --cv is given.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Threshold; defaults to twice the penalty.
    #[arg(long)]
    pub tau: Option<f64>,
    /// PC significance level.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Select the penalty by cross-validation.
    #[arg(long)]
    pub cv: bool,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = tsdag::tuning::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Keep the zeros of the estimated contemporaneous precision as fixed gaps
    /// in PC. Such gaps carry empty separating sets, which favours colliders.
    #[arg(long)]
    pub restricted_pc: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IrfModeArg {
    /// Start from the last observed p rows of the input.
    Conditional,
    /// Start from the stationary distribution.
    Unconditional,
    /// Moving-average coefficients of the latent VAR.
    Linearized,
}

#[derive(Debug, Clone, Args)]
pub struct IrfArgs {
    /// Structural model JSON; defaults to `<out>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data for empirical marginals and the conditional start.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub diff: Vec<String>,
    /// Treat the observed scale as the latent Gaussian scale.
    #[arg(long)]
    pub gaussian: bool,
    /// Variable whose structural innovation is shocked.
    #[arg(long)]
    pub shock: String,
    /// Responding variables (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub response: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    #[arg(long, default_value_t = tsdag::irf::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, value_enum, default_value_t = IrfModeArg::Unconditional)]
    pub mode: IrfModeArg,
    /// Linearized mode: scale the shock by the structural innovation's standard deviation.
    #[arg(long)]
    pub unit_variance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AicArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest VAR order considered.
    #[arg(long, default_value_t = 4)]
    pub max_lags: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Lasso)]
    pub method: MethodArg,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Cluster structures (comma separated): chain, common_cause, v_structure, diamond1, diamond2.
    #[arg(long, value_delimiter = ',', default_value = "v_structure")]
    pub structure: Vec<String>,
    /// Autoregressive persistence of every cluster.
    #[arg(long, default_value_t = 0.25)]
    pub a: f64,
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    /// Observations per replication.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Penalty policies (comma separated): cv, cv*<m>, dense, a0, fixed:<lambda>, paired:<l1>:<l2>.
    #[arg(long, value_delimiter = ',', default_value = "cv")]
    pub policy: Vec<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Lasso)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Restrict PC with the zeros of the estimated contemporaneous precision.
    #[arg(long)]
    pub restricted_pc: bool,
    #[arg(long, default_value_t = 1)]
    pub lags: usize,
    /// Seed of the first replication; replication r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the first replication's simulated panel per structure.
    #[arg(long)]
    pub save_panel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
