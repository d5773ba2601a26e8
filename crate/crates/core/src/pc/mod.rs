//! PC algorithm on an innovation covariance matrix.
//!
//! Conditional independence is judged by Fisher's z-transform of sample
//! partial correlations. Nodes, subsets and edges are visited in ascending
//! index order so the (order-dependent) output is reproducible.

mod graph;

pub use graph::{Cpdag, EdgeRecord, EdgeType, GraphDocument, SepSetRecord, SepSets};

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// `gaps[(i, j)]` forbids an edge between `i` and `j` without testing.
pub type GapMatrix = DMatrix<bool>;

/// Above this many nodes the default conditioning depth is capped.
const UNLIMITED_DEPTH_MAX_NODES: usize = 30;
const CAPPED_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PcConfig {
    pub alpha: f64,
    /// `None` selects the size-dependent default.
    pub max_cond_size: Option<usize>,
    pub fixed_gaps: Option<GapMatrix>,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            max_cond_size: None,
            fixed_gaps: None,
        }
    }
}

impl PcConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            alpha,
            ..Self::default()
        })
    }

    pub fn with_fixed_gaps(mut self, gaps: GapMatrix) -> Self {
        self.fixed_gaps = Some(gaps);
        self
    }

    pub fn with_max_cond_size(mut self, m: usize) -> Self {
        self.max_cond_size = Some(m);
        self
    }

    fn depth_limit(&self, k: usize) -> usize {
        match self.max_cond_size {
            Some(m) => m,
            None if k <= UNLIMITED_DEPTH_MAX_NODES => usize::MAX,
            None => CAPPED_DEPTH,
        }
    }
}

/// Gaps at the exact zeros of the leading `K × K` precision block.
pub fn fixed_gaps_from_theta11(theta11: &Matrix) -> GapMatrix {
    let k = theta11.nrows();
    GapMatrix::from_fn(k, k, |i, j| i != j && theta11[(i, j)] == 0.0 && theta11[(j, i)] == 0.0)
}

/// `−P_ij / √(P_ii P_jj)` with `P` the inverse of `sigma` on `{i, j} ∪ cond`.
pub fn partial_correlation(sigma: &Matrix, i: usize, j: usize, cond: &[usize]) -> Result<f64> {
    let k = sigma.nrows();
    if i == j || i >= k || j >= k || cond.iter().any(|&c| c == i || c == j || c >= k) {
        return Err(Error::invalid(format!("partial_correlation: bad indices ({i}, {j} | {cond:?})")));
    }
    if cond.is_empty() {
        let d = sigma[(i, i)] * sigma[(j, j)];
        if d <= 0.0 {
            return Err(Error::DegenerateConditioningSet { i, j });
        }
        return Ok(sigma[(i, j)] / d.sqrt());
    }
    let mut idx = vec![i, j];
    idx.extend_from_slice(cond);
    let sub = linalg::submatrix(sigma, &idx, &idx);
    let p = linalg::inverse(&sub).ok_or(Error::DegenerateConditioningSet { i, j })?;
    let d = p[(0, 0)] * p[(1, 1)];
    if !(d > 0.0) {
        return Err(Error::DegenerateConditioningSet { i, j });
    }
    Ok(-0.5 * (p[(0, 1)] + p[(1, 0)]) / d.sqrt())
}

/// Fisher's z-transform `½ ln((1+x)/(1−x))`.
pub fn fisher_z(x: f64) -> f64 {
    x.atanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Delete,
}

/// Two-sided test of zero partial correlation.
pub fn fisher_z_decision(xi: f64, n: usize, cond_size: usize, alpha: f64) -> Result<Decision> {
    if n <= cond_size + 3 {
        return Err(Error::SampleTooSmall { n, cond_size });
    }
    let stat = ((n - cond_size - 3) as f64).sqrt() * fisher_z(xi.abs());
    // |ξ| ≥ 1 gives an infinite (or NaN) statistic: keep the edge.
    Ok(if stat <= critical_value(alpha) {
        Decision::Delete
    } else {
        Decision::Keep
    })
}

/// `Φ⁻¹(1 − α/2)`.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Lexicographic `size`-subsets of `items`.
fn for_each_subset(items: &[usize], size: usize, mut f: impl FnMut(&[usize]) -> Result<bool>) -> Result<()> {
    if size > items.len() {
        return Ok(());
    }
    let mut pos: Vec<usize> = (0..size).collect();
    let mut buf = vec![0; size];
    loop {
        for (b, &p) in buf.iter_mut().zip(&pos) {
            *b = items[p];
        }
        if f(&buf)? {
            return Ok(());
        }
        // advance to the next combination
        let Some(r) = (0..size).rev().find(|&r| pos[r] < items.len() - size + r) else {
            return Ok(());
        };
        pos[r] += 1;
        for s in r + 1..size {
            pos[s] = pos[s - 1] + 1;
        }
    }
}

/// Skeleton phase: undirected graph plus separation sets.
pub fn pc_skeleton(sigma: &Matrix, names: Vec<String>, n: usize, config: &PcConfig) -> Result<Cpdag> {
    let k = sigma.nrows();
    if sigma.ncols() != k || names.len() != k {
        return Err(Error::invalid("pc_skeleton: dimension mismatch"));
    }
    PcConfig::new(config.alpha)?;
    let mut g = Cpdag::complete(names);
    if let Some(gaps) = &config.fixed_gaps {
        if gaps.shape() != (k, k) {
            return Err(Error::invalid("fixed gap matrix has the wrong shape"));
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if gaps[(i, j)] || gaps[(j, i)] {
                    g.remove_edge(i, j);
                    g.set_sepset(i, j, Vec::new());
                }
            }
        }
    }
    let limit = config.depth_limit(k);
    let mut level = 0usize;
    while level <= limit {
        let mut tested_any = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || !g.adjacent(i, j) {
                    continue;
                }
                let others: Vec<usize> = g.neighbors(i).into_iter().filter(|&v| v != j).collect();
                if others.len() < level {
                    continue;
                }
                tested_any = true;
                let mut removed = None;
                for_each_subset(&others, level, |s| {
                    let xi = partial_correlation(sigma, i, j, s)?;
                    if fisher_z_decision(xi, n, s.len(), config.alpha)? == Decision::Delete {
                        removed = Some(s.to_vec());
                        return Ok(true);
                    }
                    Ok(false)
                })?;
                if let Some(s) = removed {
                    g.remove_edge(i, j);
                    g.set_sepset(i, j, s);
                }
            }
        }
        if !tested_any {
            break;
        }
        level += 1;
    }
    Ok(g)
}

/// Orients a skeleton: colliders from separation sets, then Meek rules 1-3.
pub fn orient_edges(skeleton: &Cpdag) -> Cpdag {
    let mut g = skeleton.clone();
    let k = g.k();

    // Collider demands from unshielded triples a − c − b.
    let mut demand = vec![false; k * k];
    for c in 0..k {
        let nb = skeleton.neighbors(c);
        for (x, &a) in nb.iter().enumerate() {
            for &b in &nb[x + 1..] {
                if skeleton.adjacent(a, b) {
                    continue;
                }
                let in_sepset = skeleton.sepset(a, b).is_some_and(|s| s.contains(&c));
                if !in_sepset {
                    demand[a * k + c] = true;
                    demand[b * k + c] = true;
                }
            }
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            match (demand[a * k + b], demand[b * k + a]) {
                (true, true) => g.warn(format!(
                    "conflicting collider orientations on {} - {}; left undirected",
                    g.names()[a],
                    g.names()[b]
                )),
                (true, false) => g.add_directed(a, b),
                (false, true) => g.add_directed(b, a),
                (false, false) => {}
            }
        }
    }
    break_directed_cycles(&mut g);

    loop {
        let mut changed = false;
        for a in 0..k {
            for b in 0..k {
                if a == b || !g.is_undirected(a, b) {
                    continue;
                }
                if meek_applies(&g, a, b) && !g.directed_path_exists(b, a) {
                    g.add_directed(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    g
}

/// Whether one of Meek's rules 1-3 orients the undirected edge `a − b` as `a → b`.
fn meek_applies(g: &Cpdag, a: usize, b: usize) -> bool {
    let k = g.k();
    // R1: c → a − b with c, b non-adjacent.
    if (0..k).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a → c → b.
    if (0..k).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // R3: a − c → b and a − d → b with c, d non-adjacent.
    let mids: Vec<usize> = (0..k)
        .filter(|&c| c != b && g.is_undirected(a, c) && g.is_directed(c, b))
        .collect();
    mids.iter()
        .enumerate()
        .any(|(x, &c)| mids[x + 1..].iter().any(|&d| !g.adjacent(c, d)))
}

/// Un-orients directed edges lying on directed cycles.
fn break_directed_cycles(g: &mut Cpdag) {
    if !g.has_directed_cycle() {
        return;
    }
    let k = g.k();
    let on_cycle: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|&(a, b)| g.is_directed(a, b) && g.directed_path_exists(b, a))
        .collect();
    for (a, b) in on_cycle {
        g.add_undirected(a, b);
        g.warn(format!(
            "collider orientations formed a directed cycle through {} -> {}; left undirected",
            g.names()[a],
            g.names()[b]
        ));
    }
}

/// Skeleton followed by orientation.
pub fn pc(sigma: &Matrix, names: Vec<String>, n: usize, config: &PcConfig) -> Result<Cpdag> {
    Ok(orient_edges(&pc_skeleton(sigma, names, n, config)?))
}

/// Numeric node names `1..=k`.
pub fn default_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| i.to_string()).collect()
}
