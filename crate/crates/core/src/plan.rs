//! Transport plans (couplings) and marginal bookkeeping.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// A nonnegative coupling matrix. Marginal accuracy is whatever the
/// producing operation promises; this type only guards nonnegativity
/// and finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
}

impl TransportPlan {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        for ((i, j), &v) in entries.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("plan entry ({i}, {j}) = {v}"),
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
        Ok(TransportPlan { entries })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Count of strictly positive entries.
    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(ndarray::Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(ndarray::Axis(0))
    }
}

/// `(T·1 − p, Tᵀ·1 − q)`.
pub fn marginal_residuals(
    plan: &TransportPlan,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if plan.nrows() != p.len() || plan.ncols() != q.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} for measures of size {} and {}",
                plan.nrows(),
                plan.ncols(),
                p.len(),
                q.len()
            ),
        });
    }
    Ok((
        plan.row_sums() - p.weights(),
        plan.col_sums() - q.weights(),
    ))
}

/// Max-norm of both marginal residual blocks.
pub fn marginal_error(plan: &TransportPlan, p: &DiscreteMeasure, q: &DiscreteMeasure) -> f64 {
    let (r, c) = marginal_residuals(plan, p, q).expect("shapes checked by caller");
    r.iter()
        .chain(c.iter())
        .fold(0.0, |a, &v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::validate_measure;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn product_coupling_has_zero_residuals() {
        let p = validate_measure(&[0.3, 0.7]).unwrap();
        let q = validate_measure(&[0.25, 0.25, 0.5]).unwrap();
        let mut t = Array2::zeros((2, 3));
        for i in 0..2 {
            for j in 0..3 {
                t[[i, j]] = p.weights()[i] * q.weights()[j];
            }
        }
        let t = TransportPlan::new(t).unwrap();
        let (r, c) = marginal_residuals(&t, &p, &q).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-15));
        assert!(c.iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn zero_plan_residuals_are_negated_measures() {
        let p = validate_measure(&[0.4, 0.6]).unwrap();
        let q = validate_measure(&[1.0]).unwrap();
        let t = TransportPlan::new(Array2::zeros((2, 1))).unwrap();
        let (r, c) = marginal_residuals(&t, &p, &q).unwrap();
        assert_eq!(r, array![-0.4, -0.6]);
        assert_eq!(c, array![-1.0]);
    }

    #[test]
    fn residuals_match_reordered_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Array2::from_shape_fn((4, 6), |_| rng.random_range(0.0..0.1));
        let p = validate_measure(&vec![0.25; 4]).unwrap();
        let q = validate_measure(&vec![1.0 / 6.0; 6]).unwrap();
        let plan = TransportPlan::new(t.clone()).unwrap();
        let (r, c) = marginal_residuals(&plan, &p, &q).unwrap();
        // independent column-major accumulation
        for i in 0..4 {
            let mut s = 0.0;
            for j in (0..6).rev() {
                s += t[[i, j]];
            }
            assert!((r[i] - (s - 0.25)).abs() <= 1e-12);
        }
        for j in 0..6 {
            let mut s = 0.0;
            for i in (0..4).rev() {
                s += t[[i, j]];
            }
            assert!((c[j] - (s - 1.0 / 6.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(matches!(
            TransportPlan::new(array![[0.5, -0.1]]),
            Err(Error::NegativeInput { .. })
        ));
    }
}
