//! Constraint residuals, augmented-Lagrangian value, and block gradients.
//!
//! Every quantity exists in two algebraic routes: the dense route
//! materializes `A·Bᵀ + S`, the factored route works with cached column
//! sums and `C·B = E(FᵀB)` groupings. Both compute the same values up to
//! reassociation error.

use ndarray::{Array1, Array2, Axis};

use crate::cost::CostMatrix;

use super::vars::{LsotVariables, Multipliers};
use super::GradientPath;

/// Row and column blocks of the constraint map:
/// `((A·Bᵀ+S)1 − p, (A·Bᵀ+S)ᵀ1 − q)`, computed without materializing the
/// plan (`O(mr + nr + nnz(S))`).
pub fn alpha_blocks(
    x: &LsotVariables,
    p: &Array1<f64>,
    q: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let colsum_b = x.b.sum_axis(Axis(0));
    let colsum_a = x.a.sum_axis(Axis(0));
    let row = x.a.dot(&colsum_b) + x.s.row_sums() - p;
    let col = x.b.dot(&colsum_a) + x.s.col_sums() - q;
    (row, col)
}

/// The constraint vector `α(x)` of length `m + n`.
pub fn alpha_residuals(x: &LsotVariables, p: &Array1<f64>, q: &Array1<f64>) -> Array1<f64> {
    let (row, col) = alpha_blocks(x, p, q);
    let mut out = Array1::zeros(row.len() + col.len());
    for (slot, v) in out.iter_mut().zip(row.iter().chain(col.iter())) {
        *slot = *v;
    }
    out
}

pub fn alpha_norm(x: &LsotVariables, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let (row, col) = alpha_blocks(x, p, q);
    row.iter()
        .chain(col.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// `⟨C, A·Bᵀ + S⟩` without materializing the plan.
pub fn objective(x: &LsotVariables, cost: &CostMatrix) -> f64 {
    let linear = (&cost.times(&x.b) * &x.a).sum();
    let sparse: f64 = x
        .s
        .iter()
        .map(|&(i, j, v)| cost.entry(i, j) * v)
        .sum();
    linear + sparse
}

/// The augmented Lagrangian
/// `𝔏(x, y, β) = ⟨C, ABᵀ+S⟩ + (β/2)(‖α_rows‖² + ‖α_cols‖²)
///              + ⟨yᵖ, α_rows⟩ + ⟨y^q, α_cols⟩`.
pub fn aug_lagrangian(
    x: &LsotVariables,
    y: &Multipliers,
    beta: f64,
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
) -> f64 {
    let (ar, ac) = alpha_blocks(x, p, q);
    let quad: f64 = ar.iter().map(|v| v * v).sum::<f64>()
        + ac.iter().map(|v| v * v).sum::<f64>();
    objective(x, cost) + 0.5 * beta * quad + y.y_p.dot(&ar) + y.y_q.dot(&ac)
}

/// Partial gradients of `G(x) = 𝔏(x, y, β) + L_t·‖x − x̄‖²`, materialized.
#[derive(Debug, Clone)]
pub struct GradBlocks {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub s: Array2<f64>,
}

fn outer(u: &Array1<f64>, w: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((u.len(), w.len()), |(i, j)| u[i] * w[j])
}

/// Compute all three partial gradients of `G` at `x`.
///
/// With `l_t = 0` (or `anchor == x`) this is the gradient of `𝔏` itself.
pub fn grad_blocks(
    x: &LsotVariables,
    y: &Multipliers,
    beta: f64,
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    anchor: &LsotVariables,
    l_t: f64,
    path: GradientPath,
) -> GradBlocks {
    let (m, n) = (x.m(), x.n());
    let (ar, ac) = match path {
        GradientPath::Dense => {
            let t = x.materialize();
            (t.sum_axis(Axis(1)) - p, t.sum_axis(Axis(0)) - q)
        }
        GradientPath::Factored => alpha_blocks(x, p, q),
    };
    let u = &y.y_p + &(&ar * beta);
    let v = &y.y_q + &(&ac * beta);
    let colsum_a = x.a.sum_axis(Axis(0));
    let colsum_b = x.b.sum_axis(Axis(0));

    let cb = match path {
        GradientPath::Dense => cost.materialize().dot(&x.b),
        GradientPath::Factored => cost.times(&x.b),
    };
    let cta = match path {
        GradientPath::Dense => cost.materialize().t().dot(&x.a),
        GradientPath::Factored => cost.t_times(&x.a),
    };

    let vtb = x.b.t().dot(&v); // (vᵀB) as a length-r vector
    let uta = x.a.t().dot(&u);
    let ones_m = Array1::ones(m);
    let ones_n = Array1::ones(n);

    let mut ga = cb + outer(&u, &colsum_b) + outer(&ones_m, &vtb);
    ga += &((&x.a - &anchor.a) * (2.0 * l_t));
    let mut gb = cta + outer(&v, &colsum_a) + outer(&ones_n, &uta);
    gb += &((&x.b - &anchor.b) * (2.0 * l_t));

    let mut gs = match path {
        GradientPath::Dense => cost.materialize(),
        GradientPath::Factored => {
            Array2::from_shape_fn((m, n), |(i, j)| cost.entry(i, j))
        }
    };
    gs += &outer(&u, &ones_n);
    gs += &outer(&ones_m, &v);
    if l_t != 0.0 {
        gs += &((x.s.to_dense() - anchor.s.to_dense()) * (2.0 * l_t));
    }
    GradBlocks { a: ga, b: gb, s: gs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_random_dense_instance;
    use crate::sparse::SparseMat;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_vars(m: usize, n: usize, r: usize, seed: u64) -> LsotVariables {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((m, r), |_| rng.random_range(0.05..0.95));
        let b = Array2::from_shape_fn((n, r), |_| rng.random_range(0.05..0.95));
        let dense = Array2::from_shape_fn((m, n), |_| {
            if rng.random_bool(0.3) {
                rng.random_range(0.05..0.95)
            } else {
                0.0
            }
        });
        LsotVariables::new(a, b, SparseMat::from_dense(&dense)).unwrap()
    }

    fn random_multipliers(m: usize, n: usize, seed: u64) -> Multipliers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Multipliers {
            y_p: Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0)),
            y_q: Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn product_coupling_has_zero_alpha() {
        // A column = p, B column = 1/n against a uniform q
        let p = array![0.3, 0.7];
        let q = array![0.25, 0.25, 0.25, 0.25];
        let a = array![[0.3], [0.7]];
        let b = Array2::from_elem((4, 1), 0.25);
        let x = LsotVariables::new(a, b, SparseMat::zeros(2, 4)).unwrap();
        let alpha = alpha_residuals(&x, &p, &q);
        assert!(alpha.iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn zero_variables_alpha_is_negated_marginals() {
        let p = array![0.5, 0.5];
        let q = array![1.0];
        let x = LsotVariables::zeros(2, 1, 1);
        let alpha = alpha_residuals(&x, &p, &q);
        assert_eq!(alpha, array![-0.5, -0.5, -1.0]);
    }

    #[test]
    fn alpha_matches_dense_materialization() {
        let inst = gen_random_dense_instance(5, 7, 1).unwrap();
        let x = random_vars(5, 7, 3, 2);
        let alpha = alpha_residuals(&x, inst.p.weights(), inst.q.weights());
        let t = x.materialize();
        for i in 0..5 {
            let expect = t.row(i).sum() - inst.p.weights()[i];
            assert!((alpha[i] - expect).abs() <= 1e-12);
        }
        for j in 0..7 {
            let expect = t.column(j).sum() - inst.q.weights()[j];
            assert!((alpha[5 + j] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn lagrangian_on_feasible_point_is_the_objective() {
        // product coupling via A, B makes α = 0, so the penalty and dual
        // terms vanish for any multipliers
        let inst = gen_random_dense_instance(3, 3, 3).unwrap();
        let mut a = Array2::zeros((3, 1));
        for i in 0..3 {
            a[[i, 0]] = inst.p.weights()[i];
        }
        let mut b = Array2::zeros((3, 1));
        for j in 0..3 {
            b[[j, 0]] = inst.q.weights()[j];
        }
        let x = LsotVariables::new(a, b, SparseMat::zeros(3, 3)).unwrap();
        let y = random_multipliers(3, 3, 9);
        let val = aug_lagrangian(&x, &y, 7.5, &inst.cost, inst.p.weights(), inst.q.weights());
        let obj = objective(&x, &inst.cost);
        assert!((val - obj).abs() <= 1e-12);
    }

    #[test]
    fn lagrangian_at_zero_is_pure_penalty() {
        let inst = gen_random_dense_instance(4, 2, 4).unwrap();
        let x = LsotVariables::zeros(4, 2, 2);
        let y = Multipliers::zeros(4, 2);
        let beta = 3.0;
        let val = aug_lagrangian(&x, &y, beta, &inst.cost, inst.p.weights(), inst.q.weights());
        let pn: f64 = inst.p.weights().iter().map(|v| v * v).sum();
        let qn: f64 = inst.q.weights().iter().map(|v| v * v).sum();
        assert!((val - 0.5 * beta * (pn + qn)).abs() <= 1e-12);
    }

    #[test]
    fn lagrangian_matches_term_by_term_oracle() {
        let inst = gen_random_dense_instance(6, 4, 5).unwrap();
        let x = random_vars(6, 4, 2, 6);
        let y = random_multipliers(6, 4, 7);
        let beta = 1.7;
        let val = aug_lagrangian(&x, &y, beta, &inst.cost, inst.p.weights(), inst.q.weights());
        // independent dense computation
        let t = x.materialize();
        let c = inst.cost.materialize();
        let mut oracle = (&c * &t).sum();
        for i in 0..6 {
            let ri = t.row(i).sum() - inst.p.weights()[i];
            oracle += 0.5 * beta * ri * ri + y.y_p[i] * ri;
        }
        for j in 0..4 {
            let cj = t.column(j).sum() - inst.q.weights()[j];
            oracle += 0.5 * beta * cj * cj + y.y_q[j] * cj;
        }
        assert!((val - oracle).abs() <= 1e-12);
    }

    #[test]
    fn plain_linear_gradients_without_penalty() {
        // x = x̄, y = 0, β = 0: G_A = C·B, G_B = Cᵀ·A, G_S = C
        let inst = gen_random_dense_instance(4, 5, 8).unwrap();
        let x = random_vars(4, 5, 2, 12);
        let y = Multipliers::zeros(4, 5);
        let g = grad_blocks(
            &x,
            &y,
            0.0,
            &inst.cost,
            inst.p.weights(),
            inst.q.weights(),
            &x,
            1e5, // anchor == x, so the prox term vanishes regardless
            GradientPath::Dense,
        );
        let c = inst.cost.materialize();
        let cb = c.dot(&x.b);
        let cta = c.t().dot(&x.a);
        for (got, want) in g.a.iter().zip(cb.iter()) {
            assert!((got - want).abs() <= 1e-12);
        }
        for (got, want) in g.b.iter().zip(cta.iter()) {
            assert!((got - want).abs() <= 1e-12);
        }
        for (got, want) in g.s.iter().zip(c.iter()) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_point_sparse_gradient_formula() {
        // all-zero x with x̄ = x, β > 0: G_S = C − β(p·1ᵀ + 1·qᵀ)
        let inst = gen_random_dense_instance(3, 4, 10).unwrap();
        let x = LsotVariables::zeros(3, 4, 2);
        let y = Multipliers::zeros(3, 4);
        let beta = 2.0;
        let g = grad_blocks(
            &x,
            &y,
            beta,
            &inst.cost,
            inst.p.weights(),
            inst.q.weights(),
            &x,
            0.0,
            GradientPath::Factored,
        );
        let c = inst.cost.materialize();
        for i in 0..3 {
            for j in 0..4 {
                let want =
                    c[[i, j]] - beta * (inst.p.weights()[i] + inst.q.weights()[j]);
                assert!((g.s[[i, j]] - want).abs() <= 1e-12);
            }
        }
        assert!(g.a.iter().all(|v| v.abs() <= 1e-12)); // C·B with B = 0
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let inst = gen_random_dense_instance(4, 3, 20).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        for seed in 0..10u64 {
            let x = random_vars(4, 3, 2, 100 + seed);
            let y = random_multipliers(4, 3, 200 + seed);
            let beta = 1.5;
            let g = grad_blocks(
                &x,
                &y,
                beta,
                &inst.cost,
                &p,
                &q,
                &x,
                0.0,
                GradientPath::Dense,
            );
            let h = 1e-6;
            let eval = |xx: &LsotVariables| aug_lagrangian(xx, &y, beta, &inst.cost, &p, &q);
            for i in 0..4 {
                for k in 0..2 {
                    let mut hi = x.clone();
                    hi.a[[i, k]] += h;
                    let mut lo = x.clone();
                    lo.a[[i, k]] -= h;
                    let fd = (eval(&hi) - eval(&lo)) / (2.0 * h);
                    let got = g.a[[i, k]];
                    assert!(
                        (got - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "A[{i},{k}]: {got} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn factored_and_dense_gradients_agree() {
        let inst = crate::instance::gen_points_instance(12, 10, 2, 33).unwrap();
        let x = random_vars(12, 10, 3, 44);
        let y = random_multipliers(12, 10, 55);
        let anchor = random_vars(12, 10, 3, 66);
        let lt = 3.7;
        let beta = 2.1;
        let gd = grad_blocks(
            &x, &y, beta, &inst.cost, inst.p.weights(), inst.q.weights(), &anchor, lt,
            GradientPath::Dense,
        );
        let gf = grad_blocks(
            &x, &y, beta, &inst.cost, inst.p.weights(), inst.q.weights(), &anchor, lt,
            GradientPath::Factored,
        );
        let scale = |m: &Array2<f64>| m.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
        for (d, f) in [(&gd.a, &gf.a), (&gd.b, &gf.b), (&gd.s, &gf.s)] {
            for (x1, x2) in d.iter().zip(f.iter()) {
                assert!((x1 - x2).abs() <= 1e-10 * scale(d));
            }
        }
    }
}
