//! First-order certification: constraint norm and the distance from the
//! negated gradient to the subdifferential of the regularizer.

use ndarray::Array1;

use crate::cost::CostMatrix;

use super::grad::{alpha_norm, grad_blocks};
use super::vars::{LsotVariables, Multipliers};
use super::{GradientPath, Mode};

/// Distance of `−g` to the normal cone of `[0,1]` at `value`.
pub fn coord_dist_box(value: f64, g: f64) -> f64 {
    if value <= 0.0 {
        // N(0) = (−∞, 0]
        (-g).max(0.0)
    } else if value >= 1.0 {
        // N(1) = [0, ∞)
        g.max(0.0)
    } else {
        g.abs()
    }
}

/// Distance of `−g` to `λ·∂|s| + N_{[0,1]}(s)` for an `S` coordinate.
pub fn coord_dist_sparse(value: f64, g: f64, lambda: f64) -> f64 {
    if value <= 0.0 {
        // (−∞, λ]
        (-g - lambda).max(0.0)
    } else if value >= 1.0 {
        // [λ, ∞)
        (lambda + g).max(0.0)
    } else {
        // {λ}
        (g + lambda).abs()
    }
}

/// `(feasibility, stationarity)` of the pair `(x, y)` at penalty `β`:
/// the Euclidean norm of `α(x)` and `dist(−∇𝔏(x, y, β), ∂h(x))`.
///
/// In the low-rank-only mode the sparse block is not a variable and its
/// coordinates are excluded from the stationarity distance.
pub fn kkt_residuals(
    x: &LsotVariables,
    y: &Multipliers,
    beta: f64,
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    lambda: f64,
    mode: Mode,
) -> (f64, f64) {
    let feasibility = alpha_norm(x, p, q);
    let g = grad_blocks(x, y, beta, cost, p, q, x, 0.0, GradientPath::Factored);
    let mut acc = 0.0;
    for (&value, &grad) in x.a.iter().zip(g.a.iter()) {
        let d = coord_dist_box(value, grad);
        acc += d * d;
    }
    for (&value, &grad) in x.b.iter().zip(g.b.iter()) {
        let d = coord_dist_box(value, grad);
        acc += d * d;
    }
    if mode == Mode::Lsot {
        let s_dense = x.s.to_dense();
        for (&value, &grad) in s_dense.iter().zip(g.s.iter()) {
            let d = coord_dist_sparse(value, grad, lambda);
            acc += d * d;
        }
    }
    (feasibility, acc.sqrt())
}
