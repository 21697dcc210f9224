//! Discrete probability measures on finite supports.

use ndarray::{Array1, Array2};
use crate::error::{Error, Result};

/// Absolute tolerance on |sum(weights) - 1| accepted at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability weight vector, optionally with support coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Array1<f64>,
    support: Option<Array2<f64>>,
}

impl DiscreteMeasure {
    /// Uniform measure on `n` atoms.
    pub fn uniform(n: usize) -> Self {
        DiscreteMeasure {
            weights: Array1::from_elem(n, 1.0 / n as f64),
            support: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn support(&self) -> Option<&Array2<f64>> {
        self.support.as_ref()
    }

    /// Wrap weights that are already normalized, without rescaling them.
    ///
    /// Same invariants as [`validate_measure`], but the stored weights are
    /// the input bits; file loading uses this so round trips are exact.
    pub fn from_normalized(w: &[f64]) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidParams("measure must be nonempty".into()));
        }
        for (i, &x) in w.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("weight {i} = {x}"),
                });
            }
            if x < 0.0 {
                return Err(Error::NegativeMass { index: i, value: x });
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(DiscreteMeasure {
            weights: Array1::from_iter(w.iter().copied()),
            support: None,
        })
    }

    /// Attach support points (one row per atom).
    pub fn with_support(mut self, points: Array2<f64>) -> Result<Self> {
        if points.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "support has {} rows for {} weights",
                    points.nrows(),
                    self.len()
                ),
            });
        }
        self.support = Some(points);
        Ok(self)
    }
}

/// Validate a raw weight vector as a probability measure.
///
/// Weights must be nonnegative and sum to 1 within [`NORMALIZATION_TOL`];
/// inputs inside the tolerance are renormalized exactly (divided by their
/// sum) so downstream code can rely on the sum being 1 to machine precision.
pub fn validate_measure(w: &[f64]) -> Result<DiscreteMeasure> {
    if w.is_empty() {
        return Err(Error::InvalidParams("measure must be nonempty".into()));
    }
    for (i, &x) in w.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: format!("weight {i} = {x}"),
            });
        }
        if x < 0.0 {
            return Err(Error::NegativeMass { index: i, value: x });
        }
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    let weights = Array1::from_iter(w.iter().map(|&x| x / sum));
    Ok(DiscreteMeasure {
        weights,
        support: None,
    })
}
