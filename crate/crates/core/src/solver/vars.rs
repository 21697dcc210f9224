//! Solver variables `x = (A, B, S)` and multipliers `y = (yᵖ; y^q)`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::sparse::SparseMat;

/// The three blocks: factors `A` (m×r) and `B` (n×r) in `[0,1]`, and the
/// sparse matrix `S` (m×n) in `[0,1]` stored as index-value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LsotVariables {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub s: SparseMat,
}

impl LsotVariables {
    pub fn zeros(m: usize, n: usize, r: usize) -> Self {
        LsotVariables {
            a: Array2::zeros((m, r)),
            b: Array2::zeros((n, r)),
            s: SparseMat::zeros(m, n),
        }
    }

    pub fn new(a: Array2<f64>, b: Array2<f64>, s: SparseMat) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch {
                context: format!("A has rank {} but B has rank {}", a.ncols(), b.ncols()),
            });
        }
        if s.nrows() != a.nrows() || s.ncols() != b.nrows() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "S is {}x{} for A {}x{} and B {}x{}",
                    s.nrows(),
                    s.ncols(),
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols()
                ),
            });
        }
        let x = LsotVariables { a, b, s };
        x.check_box()?;
        Ok(x)
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    /// All entries of the three blocks must lie in `[0, 1]`.
    pub fn check_box(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if let Some(&v) = self.a.iter().find(|&&v| !ok(v)) {
            return Err(Error::InvalidParams(format!("A entry {v} outside [0,1]")));
        }
        if let Some(&v) = self.b.iter().find(|&&v| !ok(v)) {
            return Err(Error::InvalidParams(format!("B entry {v} outside [0,1]")));
        }
        if let Some(&(_, _, v)) = self.s.iter().find(|&&(_, _, v)| !ok(v)) {
            return Err(Error::InvalidParams(format!("S entry {v} outside [0,1]")));
        }
        Ok(())
    }

    /// The plan the variables represent, `A·Bᵀ + S`, materialized.
    pub fn materialize(&self) -> Array2<f64> {
        self.a.dot(&self.b.t()) + self.s.to_dense()
    }

    /// Euclidean distance over all coordinates of `(A, B, S)`.
    pub fn distance(&self, other: &LsotVariables) -> f64 {
        let mut acc = 0.0;
        for (x, y) in self.a.iter().zip(other.a.iter()) {
            acc += (x - y) * (x - y);
        }
        for (x, y) in self.b.iter().zip(other.b.iter()) {
            acc += (x - y) * (x - y);
        }
        // union of supports
        let mut it_a = self.s.iter().peekable();
        let mut it_b = other.s.iter().peekable();
        loop {
            match (it_a.peek(), it_b.peek()) {
                (Some(&&(i1, j1, v1)), Some(&&(i2, j2, v2))) => {
                    use std::cmp::Ordering::*;
                    match (i1, j1).cmp(&(i2, j2)) {
                        Less => {
                            acc += v1 * v1;
                            it_a.next();
                        }
                        Greater => {
                            acc += v2 * v2;
                            it_b.next();
                        }
                        Equal => {
                            acc += (v1 - v2) * (v1 - v2);
                            it_a.next();
                            it_b.next();
                        }
                    }
                }
                (Some(&&(_, _, v1)), None) => {
                    acc += v1 * v1;
                    it_a.next();
                }
                (None, Some(&&(_, _, v2))) => {
                    acc += v2 * v2;
                    it_b.next();
                }
                (None, None) => break,
            }
        }
        acc.sqrt()
    }

    /// Max-norm distance over all coordinates, for path-equivalence tests.
    pub fn sup_distance(&self, other: &LsotVariables) -> f64 {
        let mut best: f64 = 0.0;
        for (x, y) in self.a.iter().zip(other.a.iter()) {
            best = best.max((x - y).abs());
        }
        for (x, y) in self.b.iter().zip(other.b.iter()) {
            best = best.max((x - y).abs());
        }
        let sd = self.s.to_dense();
        let od = other.s.to_dense();
        for (x, y) in sd.iter().zip(od.iter()) {
            best = best.max((x - y).abs());
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.s.iter().all(|&(_, _, v)| v.is_finite())
    }
}

/// Dual vector for the marginal equality constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub y_p: Array1<f64>,
    pub y_q: Array1<f64>,
}

impl Multipliers {
    pub fn zeros(m: usize, n: usize) -> Self {
        Multipliers {
            y_p: Array1::zeros(m),
            y_q: Array1::zeros(n),
        }
    }

    pub fn norm(&self) -> f64 {
        let sp: f64 = self.y_p.iter().map(|v| v * v).sum();
        let sq: f64 = self.y_q.iter().map(|v| v * v).sum();
        (sp + sq).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.y_p.iter().chain(self.y_q.iter()).all(|v| v.is_finite())
    }
}
