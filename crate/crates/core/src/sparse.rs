//! Row-major sorted coordinate storage for the sparse block `S`.

use ndarray::Array2;

/// Sparse matrix as a sorted list of `(row, col, value)` triples.
///
/// Entries are kept in row-major order; exact zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMat {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    /// Build from triples; drops zeros, sorts row-major, panics on duplicates
    /// or out-of-range coordinates.
    pub fn from_triples(
        nrows: usize,
        ncols: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triples
            .into_iter()
            .filter(|&(_, _, v)| v != 0.0)
            .collect();
        for &(i, j, _) in &entries {
            assert!(i < nrows && j < ncols, "entry ({i},{j}) out of range");
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            assert!(
                (w[0].0, w[0].1) != (w[1].0, w[1].1),
                "duplicate entry at ({}, {})",
                w[0].0,
                w[0].1
            );
        }
        SparseMat {
            nrows,
            ncols,
            entries,
        }
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let triples = dense
            .indexed_iter()
            .filter(|&(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v));
        SparseMat::from_triples(dense.nrows(), dense.ncols(), triples)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self
            .entries
            .binary_search_by_key(&(i, j), |&(r, c, _)| (r, c))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for &(i, j, v) in &self.entries {
            out[[i, j]] = v;
        }
        out
    }

    /// Row sums (`S 1`).
    pub fn row_sums(&self) -> ndarray::Array1<f64> {
        let mut out = ndarray::Array1::zeros(self.nrows);
        for &(i, _, v) in &self.entries {
            out[i] += v;
        }
        out
    }

    /// Column sums (`Sᵀ 1`).
    pub fn col_sums(&self) -> ndarray::Array1<f64> {
        let mut out = ndarray::Array1::zeros(self.ncols);
        for &(_, j, v) in &self.entries {
            out[j] += v;
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, _, v)| v).sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.entries.iter().map(|&(_, _, v)| v.abs()).sum()
    }

    pub fn inf_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, _, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Sorted support coordinates.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|&(i, j, _)| (i, j)).collect()
    }
}
