//! Ground-cost matrices, stored dense or as a low-rank factor pair.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::plan::TransportPlan;

/// Factored products are validated entrywise up to this many cells; larger
/// matrices are spot-checked on a fixed stride.
const FULL_CHECK_CELLS: usize = 1 << 16;

/// Slack allowed below zero for factored products (cancellation error).
pub const FACTORED_NONNEG_TOL: f64 = 1e-10;

/// A ground-cost matrix: dense entries, or `E·Fᵀ` kept in factor form.
#[derive(Debug, Clone, PartialEq)]
pub enum CostMatrix {
    Dense(Array2<f64>),
    Factored { e: Array2<f64>, f: Array2<f64> },
}

impl CostMatrix {
    /// Wrap a dense matrix; entries must be finite and nonnegative.
    pub fn dense(entries: Array2<f64>) -> Result<Self> {
        for ((i, j), &v) in entries.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("cost entry ({i}, {j}) = {v}"),
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeInput {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        Ok(CostMatrix::Dense(entries))
    }

    /// Wrap a factor pair with `C = E·Fᵀ` implied.
    ///
    /// The product is checked for finiteness and nonnegativity (within
    /// [`FACTORED_NONNEG_TOL`]); all cells are visited at desk scale.
    pub fn factored(e: Array2<f64>, f: Array2<f64>) -> Result<Self> {
        if e.ncols() != f.ncols() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "factor inner dims differ: {} vs {}",
                    e.ncols(),
                    f.ncols()
                ),
            });
        }
        for &v in e.iter().chain(f.iter()) {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "cost factor entry".into(),
                });
            }
        }
        let (m, n) = (e.nrows(), f.nrows());
        let cells = m * n;
        let stride = if cells <= FULL_CHECK_CELLS {
            1
        } else {
            cells / FULL_CHECK_CELLS + 1
        };
        let mut cell = 0;
        while cell < cells {
            let (i, j) = (cell / n, cell % n);
            let v = e.row(i).dot(&f.row(j));
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("factored cost entry ({i}, {j})"),
                });
            }
            if v < -FACTORED_NONNEG_TOL {
                return Err(Error::NegativeInput {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            cell += stride;
        }
        Ok(CostMatrix::Factored { e, f })
    }

    pub fn nrows(&self) -> usize {
        match self {
            CostMatrix::Dense(c) => c.nrows(),
            CostMatrix::Factored { e, .. } => e.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            CostMatrix::Dense(c) => c.ncols(),
            CostMatrix::Factored { f, .. } => f.nrows(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            CostMatrix::Dense(c) => c[[i, j]],
            CostMatrix::Factored { e, f } => e.row(i).dot(&f.row(j)),
        }
    }

    /// Materialize the full matrix.
    pub fn materialize(&self) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.clone(),
            CostMatrix::Factored { e, f } => e.dot(&f.t()),
        }
    }

    /// Elementwise max-norm `‖C‖∞`.
    pub fn inf_norm(&self) -> f64 {
        match self {
            CostMatrix::Dense(c) => c.iter().fold(0.0, |a, &v| a.max(v.abs())),
            CostMatrix::Factored { e, f } => {
                let mut best: f64 = 0.0;
                for i in 0..e.nrows() {
                    for j in 0..f.nrows() {
                        best = best.max(e.row(i).dot(&f.row(j)).abs());
                    }
                }
                best
            }
        }
    }

    /// Frobenius norm; the factored form uses `‖EFᵀ‖²_F = ⟨EᵀE, FᵀF⟩`.
    pub fn frobenius_norm(&self) -> f64 {
        match self {
            CostMatrix::Dense(c) => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            CostMatrix::Factored { e, f } => {
                let ge = e.t().dot(e);
                let gf = f.t().dot(f);
                (&ge * &gf).sum().max(0.0).sqrt()
            }
        }
    }

    /// `C · B` without materializing a factored cost.
    pub fn times(&self, b: &Array2<f64>) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.dot(b),
            CostMatrix::Factored { e, f } => e.dot(&f.t().dot(b)),
        }
    }

    /// `Cᵀ · A` without materializing a factored cost.
    pub fn t_times(&self, a: &Array2<f64>) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.t().dot(a),
            CostMatrix::Factored { e, f } => f.dot(&e.t().dot(a)),
        }
    }
}

/// Total cost `⟨C, T⟩`.
///
/// Factored costs are evaluated as `Σ_k (Eᵀ T F)_kk` so the dense matrix is
/// never formed.
pub fn transport_cost(cost: &CostMatrix, plan: &TransportPlan) -> Result<f64> {
    let t = plan.entries();
    if cost.shape() != (t.nrows(), t.ncols()) {
        return Err(Error::DimensionMismatch {
            context: format!(
                "cost is {:?} but plan is {:?}",
                cost.shape(),
                (t.nrows(), t.ncols())
            ),
        });
    }
    Ok(match cost {
        CostMatrix::Dense(c) => (c * t).sum(),
        CostMatrix::Factored { e, f } => {
            let tf = t.dot(f);
            (e * &tf).sum()
        }
    })
}

/// Squared-Euclidean cost between two point clouds, kept in factor form with
/// inner dimension `d + 2`: `C_ij = ‖x_i‖² + ‖y_j‖² − 2⟨x_i, y_j⟩`.
pub fn sqeuclidean_factored_cost(x: &Array2<f64>, y: &Array2<f64>) -> Result<CostMatrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "points live in R^{} and R^{}",
                x.ncols(),
                y.ncols()
            ),
        });
    }
    let d = x.ncols();
    let mut e = Array2::zeros((x.nrows(), d + 2));
    for (i, xi) in x.rows().into_iter().enumerate() {
        e[[i, 0]] = xi.dot(&xi);
        e[[i, 1]] = 1.0;
        for k in 0..d {
            e[[i, 2 + k]] = -2.0 * xi[k];
        }
    }
    let mut f = Array2::zeros((y.nrows(), d + 2));
    for (j, yj) in y.rows().into_iter().enumerate() {
        f[[j, 0]] = 1.0;
        f[[j, 1]] = yj.dot(&yj);
        for k in 0..d {
            f[[j, 2 + k]] = yj[k];
        }
    }
    CostMatrix::factored(e, f)
}

/// Scale used for relative thresholds on reduced costs.
pub fn cost_scale(cost: &CostMatrix) -> f64 {
    1.0 + cost.inf_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_distance_point() {
        let x = array![[0.0]];
        let c = sqeuclidean_factored_cost(&x, &x).unwrap();
        assert_eq!(c.shape(), (1, 1));
        assert!(c.entry(0, 0).abs() < 1e-15);
        if let CostMatrix::Factored { e, .. } = &c {
            assert_eq!(e.ncols(), 3); // d + 2
        } else {
            panic!("expected factored cost");
        }
    }

    #[test]
    fn squared_gap_on_the_line() {
        let x = array![[0.0]];
        let y = array![[3.0]];
        let c = sqeuclidean_factored_cost(&x, &y).unwrap();
        assert!((c.entry(0, 0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn factored_matches_dense_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = |n: usize| {
            Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0))
        };
        let (x, y) = (pts(5), pts(5));
        let c = sqeuclidean_factored_cost(&x, &y).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dx = x[[i, 0]] - y[[j, 0]];
                let dy = x[[i, 1]] - y[[j, 1]];
                let direct = dx * dx + dy * dy;
                assert!(
                    (c.entry(i, j) - direct).abs() <= 1e-12,
                    "entry ({i},{j}) off: {} vs {}",
                    c.entry(i, j),
                    direct
                );
            }
        }
    }

    #[test]
    fn transport_cost_diagonal_plans() {
        let c = CostMatrix::dense(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = TransportPlan::new(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(transport_cost(&c, &t).unwrap(), 0.0);
        let c2 = CostMatrix::dense(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(transport_cost(&c2, &t).unwrap(), 1.0);
    }

    #[test]
    fn transport_cost_factored_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let fc = sqeuclidean_factored_cost(&x, &y).unwrap();
        let dc = CostMatrix::dense(fc.materialize().mapv(|v| v.max(0.0))).unwrap();
        let raw = Array2::from_shape_fn((6, 5), |_| rng.random_range(0.0..1.0));
        let total = raw.sum();
        let t = TransportPlan::new(raw / total).unwrap();
        let a = transport_cost(&fc, &t).unwrap();
        let b = transport_cost(&dc, &t).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn mismatched_points_rejected() {
        let x = array![[0.0, 1.0]];
        let y = array![[0.0]];
        assert!(matches!(
            sqeuclidean_factored_cost(&x, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
