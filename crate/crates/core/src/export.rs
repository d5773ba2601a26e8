//! CSV and JSON export of named matrices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Row-major CSV: a header of column names, then one row per matrix row led by
/// its name. Values use round-trip precision.
pub fn write_matrix_csv<W: Write>(out: W, row_names: &[String], col_names: &[String], m: &Matrix) -> Result<()> {
    if row_names.len() != m.nrows() || col_names.len() != m.ncols() {
        return Err(Error::invalid(format!(
            "names ({} x {}) do not match matrix ({} x {})",
            row_names.len(),
            col_names.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(col_names.iter().cloned());
    w.write_record(&header)?;
    for (r, name) in row_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..m.ncols()).map(|c| format!("{:.17e}", m[(r, c)])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Reads back what [`write_matrix_csv`] wrote.
pub fn read_matrix_csv<R: std::io::Read>(input: R) -> Result<(Vec<String>, Vec<String>, Matrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let cols: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.get(0).unwrap_or_default().to_owned());
        for field in rec.iter().skip(1) {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("non-numeric matrix entry {field:?}")))?,
            );
        }
    }
    if data.len() != rows.len() * cols.len() {
        return Err(Error::invalid("ragged matrix CSV"));
    }
    let m = Matrix::from_row_slice(rows.len(), cols.len(), &data);
    Ok((rows, cols, m))
}

/// A matrix with its row and column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl NamedMatrix {
    pub fn new(name: &str, rows: &[String], cols: &[String], m: &Matrix) -> Self {
        Self {
            name: name.to_owned(),
            rows: rows.to_vec(),
            cols: cols.to_vec(),
            values: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        let c = self.cols.len();
        if self.values.len() != self.rows.len() || self.values.iter().any(|r| r.len() != c) {
            return Err(Error::invalid(format!("block {} has inconsistent shape", self.name)));
        }
        Ok(Matrix::from_fn(self.rows.len(), c, |i, j| self.values[i][j]))
    }
}

/// Several named blocks in one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub blocks: Vec<NamedMatrix>,
}

impl MatrixDocument {
    pub fn push(&mut self, block: NamedMatrix) {
        self.blocks.push(block);
    }

    pub fn get(&self, name: &str) -> Option<&NamedMatrix> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix document serializes")
    }
}
