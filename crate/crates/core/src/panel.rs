//! Observation panels and lag-stacked designs.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// An `n × K` matrix of time-ordered observations with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    values: Matrix,
    names: Vec<String>,
}

impl Panel {
    /// Validates `n ≥ 4`, `K ≥ 2`, finite entries and at least two distinct
    /// values per column.
    pub fn new(values: Matrix, names: Vec<String>) -> Result<Self> {
        let (n, k) = values.shape();
        if names.len() != k {
            return Err(Error::invalid(format!(
                "{} column names for {} columns",
                names.len(),
                k
            )));
        }
        if n < 4 {
            return Err(Error::invalid(format!("panel needs at least 4 rows, got {n}")));
        }
        if k < 2 {
            return Err(Error::invalid(format!("panel needs at least 2 columns, got {k}")));
        }
        // Storage is column-major.
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (idx % n, idx / n);
            return Err(Error::invalid(format!("non-finite value at row {r}, column {c}")));
        }
        for c in 0..k {
            let col = values.column(c);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::invalid(format!(
                    "column '{}' has a single distinct value",
                    names[c]
                )));
            }
        }
        Ok(Self { values, names })
    }

    /// Panel with generated names `x1, x2, …`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(values, names)
    }

    /// Reads a UTF-8 CSV file: header row, one numeric column per variable.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let k = names.len();
        let mut data = Vec::new();
        let mut n = 0usize;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != k {
                return Err(Error::invalid(format!(
                    "row {} has {} fields, expected {k}",
                    row + 2,
                    rec.len()
                )));
            }
            for (col, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::invalid(format!(
                        "row {}, column '{}': cannot parse '{field}' as a number",
                        row + 2,
                        names[col]
                    ))
                })?;
                data.push(v);
            }
            n += 1;
        }
        Self::new(Matrix::from_row_slice(n, k, &data), names)
    }

    /// Writes the panel as CSV with round-trip precision.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        for r in 0..self.n() {
            w.write_record(self.values.row(r).iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    /// First-differences the listed columns. Every column loses its first
    /// observation so rows stay aligned in time.
    pub fn difference(&self, columns: &[usize]) -> Result<Panel> {
        if columns.is_empty() {
            return Ok(self.clone());
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= self.k()) {
            return Err(Error::invalid(format!("difference column {c} out of range")));
        }
        let n = self.n();
        let values = Matrix::from_fn(n - 1, self.k(), |r, c| {
            if columns.contains(&c) {
                self.values[(r + 1, c)] - self.values[(r, c)]
            } else {
                self.values[(r + 1, c)]
            }
        });
        Panel::new(values, self.names.clone())
    }

    /// Resolves column names to indices.
    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::invalid(format!("unknown column '{name}'")))
            })
            .collect()
    }

    /// Applies `f` elementwise to every entry.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Panel> {
        Panel::new(self.values.map(f), self.names.clone())
    }

    /// Contiguous row range as a panel of its own.
    pub fn rows(&self, range: Range<usize>) -> Result<Panel> {
        Panel::new(
            self.values.rows(range.start, range.len()).into_owned(),
            self.names.clone(),
        )
    }
}

/// The lag-stacked design `W_t = (X_t', X_{t-1}', …, X_{t-p}')'`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    values: Matrix,
    names: Vec<String>,
    p: usize,
    block_size: usize,
}

impl LaggedDesign {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Stacks lagged rows built separately inside each row segment, so that
    /// no row of the design straddles a gap between segments.
    pub fn from_segments(panel: &Panel, segments: &[Range<usize>], p: usize) -> Result<Self> {
        let k = panel.k();
        let width = (p + 1) * k;
        let mut data = Vec::new();
        let mut rows = 0usize;
        for seg in segments {
            if seg.end > panel.n() || seg.start > seg.end {
                return Err(Error::invalid(format!("segment {seg:?} out of range")));
            }
            if seg.len() <= p {
                continue;
            }
            for t in (seg.start + p)..seg.end {
                for lag in 0..=p {
                    for c in 0..k {
                        data.push(panel.values[(t - lag, c)]);
                    }
                }
                rows += 1;
            }
        }
        if rows < 4 {
            return Err(Error::InsufficientSample { n: rows + p, p });
        }
        Ok(Self {
            values: Matrix::from_row_slice(rows, width, &data),
            names: lagged_names(panel.names(), p),
            p,
            block_size: k,
        })
    }
}

fn lagged_names(names: &[String], p: usize) -> Vec<String> {
    (0..=p)
        .flat_map(|lag| names.iter().map(move |n| format!("{n}_L{lag}")))
        .collect()
}

/// Builds the lag-stacked design: row `t` holds panel rows `t+p, t+p-1, …, t`.
pub fn build_lagged(panel: &Panel, p: usize) -> Result<LaggedDesign> {
    let n = panel.n();
    if p + 3 >= n {
        return Err(Error::InsufficientSample { n, p });
    }
    LaggedDesign::from_segments(panel, &[0..n], p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: usize, cols: usize) -> Panel {
        Panel::from_matrix(Matrix::from_fn(rows, cols, |r, c| (r * 10 + c) as f64)).unwrap()
    }

    #[test]
    fn lag_zero_is_identity() {
        let p = panel(6, 2);
        let w = build_lagged(&p, 0).unwrap();
        assert_eq!(w.values(), p.values());
    }

    #[test]
    fn single_column_unrolled() {
        // Panel validation needs K >= 2; the lag rule is columnwise, so check
        // the first column of a two-column panel against [[2,1],[3,2]].
        let values = Matrix::from_row_slice(5, 2, &[1.0, 9.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0, 5.0, 5.0]);
        let p = Panel::from_matrix(values).unwrap();
        let w = build_lagged(&p, 1).unwrap();
        assert_eq!(w.values().shape(), (4, 4));
        assert_eq!(w.values()[(0, 0)], 2.0);
        assert_eq!(w.values()[(0, 2)], 1.0);
        assert_eq!(w.values()[(1, 0)], 3.0);
        assert_eq!(w.values()[(1, 2)], 2.0);
    }

    #[test]
    fn five_by_two_lag_two_by_index() {
        let p = panel(5, 2);
        let w = build_lagged(&p, 2);
        // p = 2 violates p < n - 3 for n = 5.
        assert!(matches!(w, Err(Error::InsufficientSample { .. })));
        let p = panel(6, 2);
        let w = build_lagged(&p, 2).unwrap();
        assert_eq!(w.values().shape(), (4, 6));
        for t in 0..4 {
            for lag in 0..=2 {
                for c in 0..2 {
                    let expected = ((t + 2 - lag) * 10 + c) as f64;
                    assert_eq!(w.values()[(t, lag * 2 + c)], expected);
                }
            }
        }
        assert_eq!(w.names()[0], "x1_L0");
        assert_eq!(w.names()[5], "x2_L2");
    }

    #[test]
    fn rejects_bad_panels() {
        assert!(Panel::from_matrix(Matrix::zeros(3, 2)).is_err());
        let mut m = Matrix::from_fn(5, 2, |r, _| r as f64);
        m[(2, 1)] = f64::NAN;
        assert!(Panel::from_matrix(m).is_err());
        let m = Matrix::from_fn(5, 2, |r, c| if c == 0 { r as f64 } else { 1.0 });
        assert!(Panel::from_matrix(m).is_err());
    }

    #[test]
    fn csv_round_trip_and_differencing() {
        let text = "a,b\n1,10\n2,12\n4,11\n7,15\n11,13\n";
        let p = Panel::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(p.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(p.n(), 5);
        let d = p.difference(&[0]).unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.values().column(0).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.values().column(1).as_slice(), &[12.0, 11.0, 15.0, 13.0]);
        assert!(Panel::from_csv_reader("a,b\n1,x\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(Panel::from_csv_reader(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn segments_do_not_straddle_gaps() {
        let p = panel(12, 2);
        let w = LaggedDesign::from_segments(&p, &[0..4, 8..12], 1).unwrap();
        assert_eq!(w.rows(), 6);
        // Second segment starts at panel row 9 (lag 0) with lag row 8.
        assert_eq!(w.values()[(3, 0)], 90.0);
        assert_eq!(w.values()[(3, 2)], 80.0);
    }
}
