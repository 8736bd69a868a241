//! Compressed sparse row storage for substochastic transition matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square matrix in CSR layout. Columns within each row are sorted and
/// unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    /// Builds from per-row entry lists. Entries are sorted, duplicate
    /// columns summed and exact zeros dropped.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::Dimension(format!("{} rows for a {n}x{n} matrix", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if c >= n {
                    return Err(Error::Dimension(format!("column {c} out of range for n={n}")));
                }
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            // drop zeros produced by cancellation or given explicitly
            let mut w = start;
            for r in start..cols.len() {
                if vals[r] != 0.0 {
                    cols[w] = cols[r];
                    vals[w] = vals[r];
                    w += 1;
                }
            }
            cols.truncate(w);
            vals.truncate(w);
            row_ptr.push(cols.len());
        }
        Ok(Self { n, row_ptr, cols, vals })
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let rows = a
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            .collect();
        Self::from_rows(n, rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, v) = self.row(i);
        c.iter().copied().zip(v.iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row_sum(i)).collect()
    }

    /// `‖A‖∞`, the maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `out = A·x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in self.row_entries(i) {
                row[j] = v;
            }
        }
        a
    }

    /// Entries of `self - other` for row `i`, merged over both patterns.
    fn diff_row<'a>(&'a self, other: &'a SparseMatrix, i: usize) -> impl Iterator<Item = (usize, f64)> + 'a {
        let (ca, va) = self.row(i);
        let (cb, vb) = other.row(i);
        let (mut p, mut q) = (0, 0);
        std::iter::from_fn(move || {
            match (ca.get(p), cb.get(q)) {
                (None, None) => None,
                (Some(&a), Some(&b)) if a == b => {
                    let out = (a, va[p] - vb[q]);
                    p += 1;
                    q += 1;
                    Some(out)
                }
                (Some(&a), Some(&b)) if a < b => {
                    p += 1;
                    Some((a, va[p - 1]))
                }
                (Some(&a), None) => {
                    p += 1;
                    Some((a, va[p - 1]))
                }
                (_, Some(&b)) => {
                    q += 1;
                    Some((b, -vb[q - 1]))
                }
            }
        })
    }

    /// `‖self − other‖∞`.
    pub fn diff_inf_norm(&self, other: &SparseMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        (0..self.n)
            .map(|i| self.diff_row(other, i).map(|(_, d)| d.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖(self − other)·x‖∞`.
    pub fn diff_weighted_inf_norm(&self, other: &SparseMatrix, x: &[f64]) -> f64 {
        assert_eq!(self.n, other.n);
        (0..self.n)
            .map(|i| self.diff_row(other, i).map(|(j, d)| d * x[j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json_rows(&self) -> Vec<JsonRow> {
        (0..self.n)
            .filter(|&i| self.row_ptr[i + 1] > self.row_ptr[i])
            .map(|i| {
                let (c, v) = self.row(i);
                JsonRow { s: i, cols: c.to_vec(), vals: v.to_vec() }
            })
            .collect()
    }

    pub fn from_json_rows(n: usize, rows: &[JsonRow]) -> Result<Self> {
        let mut dense_rows = vec![Vec::new(); n];
        for r in rows {
            if r.s >= n || r.cols.len() != r.vals.len() {
                return Err(Error::Dimension(format!("bad transition row for state {}", r.s)));
            }
            dense_rows[r.s].extend(r.cols.iter().copied().zip(r.vals.iter().copied()));
        }
        Self::from_rows(n, dense_rows)
    }
}

/// One matrix row as stored in model JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonRow {
    pub s: usize,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn diff_inf_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
