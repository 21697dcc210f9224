//! Closed-form proximal updates: clamping for the factors, shrinkage then
//! clamping for the sparse block.

use ndarray::Array2;

use crate::sparse::SparseMat;

pub fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Soft threshold `sign(z)·max(|z| − a, 0)`.
pub fn shrink(z: f64, a: f64) -> f64 {
    z.signum() * (z.abs() - a).max(0.0)
}

/// `clamp(current − gradient/L, 0, 1)` elementwise, for the `A`/`B` blocks.
pub fn prox_factor(current: &Array2<f64>, gradient: &Array2<f64>, l: f64) -> Array2<f64> {
    let mut out = current - &(gradient / l);
    out.mapv_inplace(clamp01);
    out
}

/// `clamp(shrink(current − gradient/L, λ/L), 0, 1)` for a single coordinate
/// of `S`; exact zeros are dropped by the caller.
pub fn prox_sparse_coord(current: f64, gradient: f64, l: f64, lambda: f64) -> f64 {
    clamp01(shrink(current - gradient / l, lambda / l))
}

/// Dense `S` update; the result is re-sparsified.
pub fn prox_sparse_dense(
    current: &Array2<f64>,
    gradient: &Array2<f64>,
    l: f64,
    lambda: f64,
) -> SparseMat {
    let mut out = Array2::zeros(current.dim());
    for ((i, j), slot) in out.indexed_iter_mut() {
        *slot = prox_sparse_coord(current[[i, j]], gradient[[i, j]], l, lambda);
    }
    SparseMat::from_dense(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_zero_lambda_is_a_fixed_point() {
        let cur = array![[0.25, 0.75], [0.0, 1.0]];
        let grad = Array2::zeros((2, 2));
        assert_eq!(prox_factor(&cur, &grad, 2.0), cur);
        let s = prox_sparse_dense(&cur, &grad, 2.0, 0.0);
        assert_eq!(s.to_dense(), cur);
    }

    #[test]
    fn shrinkage_kills_small_entries() {
        // threshold λ/L = 0.6 exceeds the value 0.5
        assert_eq!(prox_sparse_coord(0.5, 0.0, 1.0, 0.6), 0.0);
    }

    #[test]
    fn clamp_activates_at_the_upper_bound() {
        // 0.9 − (−L)/L = 1.9 clamps to 1
        let out = prox_factor(&array![[0.9]], &array![[-3.0]], 3.0);
        assert_eq!(out[[0, 0]], 1.0);
    }
}
