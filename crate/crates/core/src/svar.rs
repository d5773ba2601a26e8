//! Structural VAR coefficients from an innovation covariance and a DAG.
//!
//! With `V(i)` the parents of node `i`, row `i` of `Δ` holds the regression
//! coefficients `Σ_{V,V}⁻¹ Σ_{V,i}`. Nodes are permuted into a topological
//! order by `Π`, in which `D = Π Δ Π'` is strictly lower triangular and the
//! innovations satisfy `Π ε = H ξ` with `H = (I − D)⁻¹` and diagonal `Σ_ξ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::pc::Cpdag;
use crate::sparse_precision::companion;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    pub names: Vec<String>,
    /// `order[r]` is the node placed at position `r`.
    pub order: Vec<usize>,
    pub pi: Matrix,
    pub delta: Matrix,
    pub d: Matrix,
    pub h: Matrix,
    pub sigma_xi: Matrix,
    /// Largest off-diagonal entry of `H⁻¹ Π Σε Π' H⁻¹'` dropped from `Σ_ξ`.
    pub xi_residual: f64,
    /// `K × pK` autoregressive strip, most recent lag first.
    pub a: Matrix,
}

impl StructuralModel {
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn p(&self) -> usize {
        self.a.ncols() / self.k().max(1)
    }

    /// Attaches autoregressive coefficients.
    pub fn with_autoregression(mut self, a: Matrix) -> Result<Self> {
        let k = self.k();
        if a.nrows() != k || a.ncols() == 0 || a.ncols() % k != 0 {
            return Err(Error::invalid(format!(
                "autoregressive matrix is {}x{}, expected {k} x pK",
                a.nrows(),
                a.ncols()
            )));
        }
        self.a = a;
        Ok(self)
    }

    /// Position of node `l` in the causal order, i.e. the index of `Π e_l`.
    pub fn position(&self, node: usize) -> usize {
        self.order.iter().position(|&v| v == node).expect("node in order")
    }

    /// `Π' H`: contemporaneous loading of `ξ` on `ε`.
    pub fn impact(&self) -> Matrix {
        self.pi.transpose() * &self.h
    }

    /// Model-implied innovation covariance `Π' H Σ_ξ H' Π`.
    pub fn implied_sigma_eps(&self) -> Matrix {
        let b = self.impact();
        let mut s = &b * &self.sigma_xi * b.transpose();
        linalg::symmetrize_in_place(&mut s);
        s
    }

    pub fn companion(&self) -> Matrix {
        companion(&self.a)
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.companion())
    }

    pub fn ensure_stationary(&self) -> Result<()> {
        let r = self.spectral_radius();
        if r >= 1.0 {
            return Err(Error::Nonstationary { spectral_radius: r });
        }
        Ok(())
    }

    /// Node names in causal order.
    pub fn causal_order_names(&self) -> Vec<String> {
        self.order.iter().map(|&i| self.names[i].clone()).collect()
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            names: self.names.clone(),
            causal_order: self.causal_order_names(),
            pi: rows(&self.pi),
            delta: rows(&self.delta),
            d: rows(&self.d),
            h: rows(&self.h),
            sigma_xi: rows(&self.sigma_xi),
            xi_residual: self.xi_residual,
            a: rows(&self.a),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let k = doc.names.len();
        let order = doc
            .causal_order
            .iter()
            .map(|n| {
                doc.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::invalid(format!("unknown node '{n}' in causal order")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..k).collect::<Vec<_>>() {
            return Err(Error::invalid("causal order is not a permutation of the nodes"));
        }
        let model = StructuralModel {
            names: doc.names.clone(),
            order,
            pi: matrix(&doc.pi, k, k, "pi")?,
            delta: matrix(&doc.delta, k, k, "delta")?,
            d: matrix(&doc.d, k, k, "d")?,
            h: matrix(&doc.h, k, k, "h")?,
            sigma_xi: matrix(&doc.sigma_xi, k, k, "sigma_xi")?,
            xi_residual: doc.xi_residual,
            a: Matrix::zeros(k, k),
        };
        let cols = doc.a.first().map_or(0, Vec::len);
        model.with_autoregression(matrix(&doc.a, k, cols, "a")?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serialises")
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_document(&serde_json::from_str(&text)?)
    }
}

/// Serialisable form with row-major nested matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub names: Vec<String>,
    pub causal_order: Vec<String>,
    pub pi: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub sigma_xi: Vec<Vec<f64>>,
    pub xi_residual: f64,
    pub a: Vec<Vec<f64>>,
}

pub(crate) fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], nr: usize, nc: usize, what: &str) -> Result<Matrix> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid(format!("matrix '{what}' should be {nr}x{nc}")));
    }
    Ok(Matrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

/// Parent sets of a fully directed graph.
pub fn parent_sets(dag: &Cpdag) -> Result<Vec<Vec<usize>>> {
    let undirected = dag.undirected_count();
    if undirected > 0 {
        return Err(Error::NotFullyDirected { undirected });
    }
    Ok((0..dag.k()).map(|i| dag.parents(i)).collect())
}

/// Permutation matrix with `Π[r, order[r]] = 1`.
pub fn permutation_matrix(order: &[usize]) -> Matrix {
    let k = order.len();
    let mut pi = Matrix::zeros(k, k);
    for (r, &v) in order.iter().enumerate() {
        pi[(r, v)] = 1.0;
    }
    pi
}

/// `Δ`, `Π`, `D`, `H` and `Σ_ξ` from `Σε` and a DAG. The returned model has
/// a zero first-order autoregression; attach estimates with
/// [`StructuralModel::with_autoregression`].
pub fn structural_coefficients(sigma_eps: &Matrix, dag: &Cpdag) -> Result<StructuralModel> {
    let k = dag.k();
    if sigma_eps.shape() != (k, k) {
        return Err(Error::invalid("innovation covariance does not match the graph"));
    }
    let parents = parent_sets(dag)?;
    let order = dag.topological_order().ok_or(Error::NotADag)?;

    let mut delta = Matrix::zeros(k, k);
    for (i, v) in parents.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let svv = linalg::submatrix(sigma_eps, v, v);
        let svi = linalg::submatrix(sigma_eps, v, &[i]).column(0).into_owned();
        let d = linalg::solve(&svv, &svi).ok_or(Error::DegenerateParentCovariance { node: i })?;
        for (x, &j) in v.iter().enumerate() {
            delta[(i, j)] = d[x];
        }
    }

    let pi = permutation_matrix(&order);
    let d = &pi * &delta * pi.transpose();
    debug_assert!((0..k).all(|r| (r..k).all(|c| d[(r, c)] == 0.0)));
    let h_inv = Matrix::identity(k, k) - &d;
    // Unit lower-triangular, so the inverse always exists.
    let h = h_inv
        .clone()
        .solve_lower_triangular(&Matrix::identity(k, k))
        .expect("unit lower-triangular matrix is invertible");
    let full = &h_inv * &pi * sigma_eps * pi.transpose() * h_inv.transpose();
    let sigma_xi = Matrix::from_diagonal(&full.diagonal());
    let mut xi_residual = 0.0_f64;
    for r in 0..k {
        for c in 0..k {
            if r != c {
                xi_residual = xi_residual.max(full[(r, c)].abs());
            }
        }
    }
    if xi_residual > 1e-8 {
        log::info!("structural innovations not exactly uncorrelated: max off-diagonal {xi_residual:.3e}");
    }
    Ok(StructuralModel {
        names: dag.names().to_vec(),
        order,
        pi,
        delta,
        d,
        h,
        sigma_xi,
        xi_residual,
        a: Matrix::zeros(k, k),
    })
}

/// `A^s`, the leading `K × K` block of the companion power.
pub fn ar_power(a: &Matrix, s: usize) -> Matrix {
    let k = a.nrows();
    let f = companion(a);
    let mut power = Matrix::identity(f.nrows(), f.nrows());
    for _ in 0..s {
        power = &f * &power;
    }
    power.view((0, 0), (k, k)).into_owned()
}

/// Moving-average coefficient `Υ_s = A^s Π' H`.
pub fn ma_coefficients(model: &StructuralModel, s: usize) -> Matrix {
    ar_power(&model.a, s) * model.impact()
}

/// `Υ_0 … Υ_S` without recomputing powers.
pub fn ma_sequence(model: &StructuralModel, horizons: usize) -> Vec<Matrix> {
    let k = model.k();
    let f = model.companion();
    let dim = f.nrows();
    let mut power = Matrix::identity(dim, dim);
    let impact = model.impact();
    let mut out = Vec::with_capacity(horizons + 1);
    for _ in 0..=horizons {
        out.push(power.view((0, 0), (k, k)).into_owned() * &impact);
        power = &f * &power;
    }
    out
}
