//! Smoothness and strong-convexity constants for the proximal subproblems.

use ndarray::Array1;

use crate::cost::CostMatrix;
use super::vars::Multipliers;

/// The constant `L(y, β)` and its ingredients.
///
/// `G(x) = 𝔏(x, y, β) + L‖x − x̄‖²` is `3L`-smooth and `L`-strongly convex.
#[derive(Debug, Clone)]
pub struct Smoothness {
    pub l: f64,
    pub b_u: Vec<f64>,
    pub l_c: f64,
}

/// Assemble `L(y, β) = √(2r)‖C‖_F + √(2r)(m√n + n√m)‖y‖ + β·L_c`.
///
/// Each `B_u` is the exact supremum over the box of `max{|α_u|, ‖∇α_u‖}`:
/// a row constraint attains `|α_u| = max(p_u, n(r+1) − p_u)` at a corner and
/// `‖∇α_u‖² = r·n² + n·r + n` with every coordinate at 1 (columns swap the
/// roles of m and n).
pub fn smoothness_constant(
    y: &Multipliers,
    beta: f64,
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    r: usize,
) -> Smoothness {
    let (m, n) = (p.len(), q.len());
    let rf = r as f64;
    let (mf, nf) = (m as f64, n as f64);
    let mut b_u = Vec::with_capacity(m + n);
    let row_grad_sup = (rf * nf * nf + nf * rf + nf).sqrt();
    for &pu in p.iter() {
        let alpha_sup = pu.max(nf * (rf + 1.0) - pu);
        b_u.push(alpha_sup.max(row_grad_sup));
    }
    let col_grad_sup = (rf * mf * mf + mf * rf + mf).sqrt();
    for &qu in q.iter() {
        let alpha_sup = qu.max(mf * (rf + 1.0) - qu);
        b_u.push(alpha_sup.max(col_grad_sup));
    }

    let mut l_c = 0.0;
    for (u, &bu) in b_u.iter().enumerate() {
        let weight = if u < m {
            (2.0 * nf * rf).sqrt()
        } else {
            (2.0 * mf * rf).sqrt()
        };
        l_c += weight * bu + bu * bu;
    }

    let l = (2.0 * rf).sqrt() * cost.frobenius_norm()
        + (2.0 * rf).sqrt() * (mf * nf.sqrt() + nf * mf.sqrt()) * y.norm()
        + beta * l_c;
    Smoothness { l, b_u, l_c }
}
