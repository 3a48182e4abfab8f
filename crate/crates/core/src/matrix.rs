//! Column-compressed sparse storage for term × time feature matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse matrix stored column by column. Rows are terms, columns are time
/// bins. Every column keeps its entries sorted by row and never stores an
/// explicit zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl FeatureMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            cols: vec![Vec::new(); n_cols],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed in input order; resulting zeros are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_cols];
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::ShapeMismatch(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            cols[c].push((r, v));
        }
        for col in &mut cols {
            // stable sort keeps the summation order of duplicates fixed
            col.sort_by_key(|&(r, _)| r);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(r, v) in col.iter() {
                match merged.last_mut() {
                    Some((lr, lv)) if *lr == r => *lv += v,
                    _ => merged.push((r, v)),
                }
            }
            merged.retain(|&(_, v)| v != 0.0);
            *col = merged;
        }
        Ok(Self { n_rows, cols })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let cols = (0..dense.ncols())
            .map(|c| {
                (0..dense.nrows())
                    .filter_map(|r| {
                        let v = dense[(r, c)];
                        (v != 0.0).then_some((r, v))
                    })
                    .collect()
            })
            .collect();
        Self {
            n_rows: dense.nrows(),
            cols,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.cols.len());
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn column(&self, c: usize) -> &[(usize, f64)] {
        &self.cols[c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let col = &self.cols[c];
        match col.binary_search_by_key(&r, |&(row, _)| row) {
            Ok(i) => col[i].1,
            Err(_) => 0.0,
        }
    }

    /// Iterates nonzeros in column-major order as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cols
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c, v)))
    }

    /// Applies `f(row, value)` to every stored entry, dropping results that are zero.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let cols = self
            .cols
            .iter()
            .map(|col| {
                col.iter()
                    .filter_map(|&(r, v)| {
                        let nv = f(r, v);
                        (nv != 0.0).then_some((r, nv))
                    })
                    .collect()
            })
            .collect();
        Self {
            n_rows: self.n_rows,
            cols,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map_values(|_, v| v * factor)
    }

    /// Entrywise sum of equally shaped matrices, accumulated in slice order.
    pub fn sum(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("sum of zero matrices".into()))?;
        let (n_rows, n_cols) = (first.n_rows, first.n_cols());
        if parts.iter().any(|m| m.n_rows != n_rows || m.n_cols() != n_cols) {
            return Err(Error::ShapeMismatch("summands differ in shape".into()));
        }
        let mut dense_col = vec![0.0; n_rows];
        let mut touched = vec![false; n_rows];
        let mut cols = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let mut rows = Vec::new();
            for m in parts {
                for &(r, v) in &m.cols[c] {
                    if !touched[r] {
                        touched[r] = true;
                        rows.push(r);
                    }
                    dense_col[r] += v;
                }
            }
            rows.sort_unstable();
            let mut col = Vec::with_capacity(rows.len());
            for r in rows {
                let v = dense_col[r];
                if v != 0.0 {
                    col.push((r, v));
                }
                dense_col[r] = 0.0;
                touched[r] = false;
            }
            cols.push(col);
        }
        Ok(Self { n_rows, cols })
    }

    /// Returns a matrix whose column `j` is column `order[j]` of `self`.
    pub fn select_columns(&self, order: &[usize]) -> Self {
        Self {
            n_rows: self.n_rows,
            cols: order.iter().map(|&c| self.cols[c].clone()).collect(),
        }
    }

    /// Keeps columns `start..` and drops the rest.
    pub fn drop_leading_columns(&self, start: usize) -> Self {
        Self {
            n_rows: self.n_rows,
            cols: self.cols[start.min(self.cols.len())..].to_vec(),
        }
    }

    pub fn dot_columns(&self, a: usize, other: &FeatureMatrix, b: usize) -> f64 {
        sparse_dot(&self.cols[a], &other.cols[b])
    }

    /// Inner products of a dense row-space vector with every column.
    pub fn project(&self, weights: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|col| col.iter().map(|&(r, v)| weights[r] * v).sum())
            .collect()
    }

    /// Linear Gram matrix `XᵀX` over all columns, accumulated row by row.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n_cols();
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_rows];
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                by_row[r].push((c, v));
            }
        }
        let mut g = DMatrix::zeros(n, n);
        for row in &by_row {
            for (i, &(a, va)) in row.iter().enumerate() {
                for &(b, vb) in &row[i..] {
                    g[(a, b)] += va * vb;
                }
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                g[(b, a)] = g[(a, b)];
            }
        }
        g
    }
}

pub(crate) fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}
