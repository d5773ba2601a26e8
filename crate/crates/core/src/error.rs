use std::path::PathBuf;

/// Errors raised by the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient sample for lag order: n = {n}, p = {p}")]
    InsufficientSample { n: usize, p: usize },

    #[error("zero rank variance in column {column}")]
    ZeroRankVariance { column: usize },

    #[error("lasso did not converge for column {column} after {iterations} sweeps (max change {max_change:.3e}, KKT residual {kkt_residual:.3e})")]
    LassoNotConverged {
        column: usize,
        iterations: usize,
        max_change: f64,
        kkt_residual: f64,
    },

    #[error("clime infeasible (singular scaling matrix) at column {column}")]
    ClimeInfeasible { column: usize },

    #[error("linear program failed: {0}")]
    LinearProgram(#[from] crate::simplex::LpError),

    #[error("refit singular at column {column}")]
    RefitSingular { column: usize },

    #[error("theta11 singular")]
    Theta11Singular,

    #[error("degenerate conditioning set for ({i}, {j})")]
    DegenerateConditioningSet { i: usize, j: usize },

    #[error("sample too small for conditioning size: n = {n}, conditioning size = {cond_size}")]
    SampleTooSmall { n: usize, cond_size: usize },

    #[error("CPDAG not fully directed; SVAR not identified ({undirected} undirected edges)")]
    NotFullyDirected { undirected: usize },

    #[error("not a DAG")]
    NotADag,

    #[error("degenerate parent covariance for node {node}")]
    DegenerateParentCovariance { node: usize },

    #[error("nonstationary model: spectral radius {spectral_radius:.6} >= 1")]
    Nonstationary { spectral_radius: f64 },

    #[error("unstable autoregression: spectral radius {spectral_radius:.6} >= 1")]
    UnstableAutoregression { spectral_radius: f64 },

    #[error("invalid precision for scoring (not positive definite)")]
    InvalidPrecision,

    #[error("fold too small: {rows} rows in fold {fold}")]
    FoldTooSmall { fold: usize, rows: usize },

    #[error("graphs have different node sets")]
    NodeMismatch,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of structural identification rather than numerics.
    pub fn is_identification_failure(&self) -> bool {
        matches!(self, Error::NotFullyDirected { .. } | Error::NotADag)
    }

    /// True for input or file-system problems.
    pub fn is_usage_failure(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::InsufficientSample { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
