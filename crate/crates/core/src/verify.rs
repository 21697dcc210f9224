//! Shared numerical property suites, runnable from tests and the CLI.
//!
//! Each suite fans its cases out with [`crate::par::maybe_par_map`] and
//! reports the worst observed error; a case that violates its tolerance
//! counts as a failure.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{best_sparse_truncation, theorem_bound, BoundVariant, Decomposition};
use crate::cost::CostMatrix;
use crate::entropic::{round_to_feasible, sinkhorn_projection, support_feasible};
use crate::error::{Error, Result};
use crate::exact::{oracle_tiny, solve_exact};
use crate::instance::{gen_planted_instance, gen_random_dense_instance, Instance};
use crate::measure::validate_measure;
use crate::par::maybe_par_map;
use crate::plan::TransportPlan;
use crate::solver::{
    aug_lagrangian, grad_blocks, smoothness_constant, GradientPath, LsotVariables, Multipliers,
};
use crate::sparse::SparseMat;

/// Outcome of one property suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub cases: usize,
    pub failures: usize,
    pub max_err: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Run a named suite (`gradients`, `convexity`, `projection`, `oracle`,
/// `bounds`, or `all`).
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<SuiteReport>> {
    match name {
        "gradients" => Ok(vec![gradient_suite(seed, 100)]),
        "convexity" => Ok(vec![convexity_suite(seed, 200)]),
        "projection" => Ok(vec![projection_suite(seed, 50)]),
        "oracle" => Ok(vec![oracle_suite(seed, 50)]),
        "bounds" => Ok(vec![bounds_suite(seed, 20)]),
        "all" => Ok(vec![
            gradient_suite(seed, 100),
            convexity_suite(seed, 200),
            projection_suite(seed, 50),
            oracle_suite(seed, 50),
            bounds_suite(seed, 20),
        ]),
        other => Err(Error::UnknownSuite(other.to_string())),
    }
}

pub(crate) fn random_box_vars(m: usize, n: usize, r: usize, rng: &mut ChaCha8Rng) -> LsotVariables {
    let a = Array2::from_shape_fn((m, r), |_| rng.random_range(0.0..1.0));
    let b = Array2::from_shape_fn((n, r), |_| rng.random_range(0.0..1.0));
    let dense = Array2::from_shape_fn((m, n), |_| {
        if rng.random_bool(0.3) {
            rng.random_range(0.0..1.0)
        } else {
            0.0
        }
    });
    LsotVariables::new(a, b, SparseMat::from_dense(&dense)).unwrap()
}

fn interior_vars(m: usize, n: usize, r: usize, rng: &mut ChaCha8Rng) -> LsotVariables {
    let a = Array2::from_shape_fn((m, r), |_| rng.random_range(0.05..0.95));
    let b = Array2::from_shape_fn((n, r), |_| rng.random_range(0.05..0.95));
    let dense = Array2::from_shape_fn((m, n), |_| rng.random_range(0.05..0.95));
    LsotVariables::new(a, b, SparseMat::from_dense(&dense)).unwrap()
}

fn random_multipliers(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Multipliers {
    Multipliers {
        y_p: Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0)),
        y_q: Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
    }
}

/// All three partial gradients against central finite differences on
/// seeded interior points (7×5, rank 3), plus factored/dense agreement.
pub fn gradient_suite(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xA11CE + case));
        let (m, n, r) = (7usize, 5usize, 3usize);
        let inst = gen_random_dense_instance(m, n, seed.wrapping_add(case)).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let x = interior_vars(m, n, r, &mut rng);
        let y = random_multipliers(m, n, &mut rng);
        let beta = rng.random_range(0.5..3.0);
        let g = grad_blocks(&x, &y, beta, &inst.cost, &p, &q, &x, 0.0, GradientPath::Dense);
        let gf = grad_blocks(
            &x,
            &y,
            beta,
            &inst.cost,
            &p,
            &q,
            &x,
            0.0,
            GradientPath::Factored,
        );
        let h = 1e-6;
        let eval = |xx: &LsotVariables| aug_lagrangian(xx, &y, beta, &inst.cost, &p, &q);
        let mut max_rel: f64 = 0.0;

        let mut check = |got: f64, fd: f64| {
            let rel = (got - fd).abs() / fd.abs().max(1.0);
            max_rel = max_rel.max(rel);
        };
        for i in 0..m {
            for k in 0..r {
                let mut hi = x.clone();
                hi.a[[i, k]] += h;
                let mut lo = x.clone();
                lo.a[[i, k]] -= h;
                check(g.a[[i, k]], (eval(&hi) - eval(&lo)) / (2.0 * h));
            }
        }
        for j in 0..n {
            for k in 0..r {
                let mut hi = x.clone();
                hi.b[[j, k]] += h;
                let mut lo = x.clone();
                lo.b[[j, k]] -= h;
                check(g.b[[j, k]], (eval(&hi) - eval(&lo)) / (2.0 * h));
            }
        }
        let s_dense = x.s.to_dense();
        for i in 0..m {
            for j in 0..n {
                let mut hi_d = s_dense.clone();
                hi_d[[i, j]] += h;
                let mut lo_d = s_dense.clone();
                lo_d[[i, j]] -= h;
                let mut hi = x.clone();
                hi.s = SparseMat::from_dense(&hi_d);
                let mut lo = x.clone();
                lo.s = SparseMat::from_dense(&lo_d);
                check(g.s[[i, j]], (eval(&hi) - eval(&lo)) / (2.0 * h));
            }
        }
        // the two gradient routes must agree far tighter than the FD check
        let mut path_gap: f64 = 0.0;
        for (d, f) in [(&g.a, &gf.a), (&g.b, &gf.b), (&g.s, &gf.s)] {
            let scale = d.iter().fold(1.0_f64, |acc, &v| acc.max(v.abs()));
            for (x1, x2) in d.iter().zip(f.iter()) {
                path_gap = path_gap.max((x1 - x2).abs() / scale);
            }
        }
        (max_rel, path_gap)
    });
    let max_fd = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_path = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let failures = results
        .iter()
        .filter(|r| r.0 > 1e-5 || r.1 > 1e-10)
        .count();
    SuiteReport {
        suite: "gradients".into(),
        seed,
        cases,
        failures,
        max_err: max_fd,
        detail: format!("max FD rel err {max_fd:.3e}; max path gap {max_path:.3e}"),
    }
}

/// Quadratic sandwich for the proximal subproblem: with `L` from the
/// analytic constant, `G` satisfies the `L/2` lower and `3L/2` upper
/// expansions on random pairs in the box.
pub fn convexity_suite(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xC0FFEE + case));
        let (m, n, r) = (6usize, 5usize, 2usize);
        let inst = gen_random_dense_instance(m, n, seed.wrapping_add(1000 + case)).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let y = random_multipliers(m, n, &mut rng);
        let beta = rng.random_range(0.5..5.0);
        let anchor = random_box_vars(m, n, r, &mut rng);
        let x1 = random_box_vars(m, n, r, &mut rng);
        let x2 = random_box_vars(m, n, r, &mut rng);
        let l = smoothness_constant(&y, beta, &inst.cost, &p, &q, r).l;

        let g_val = |x: &LsotVariables| {
            let d = x.distance(&anchor);
            aug_lagrangian(x, &y, beta, &inst.cost, &p, &q) + l * d * d
        };
        let g1 = grad_blocks(
            &x1,
            &y,
            beta,
            &inst.cost,
            &p,
            &q,
            &anchor,
            l,
            GradientPath::Dense,
        );
        let mut inner = 0.0;
        for (ga, (v1, v2)) in g1.a.iter().zip(x1.a.iter().zip(x2.a.iter())) {
            inner += ga * (v2 - v1);
        }
        for (gb, (v1, v2)) in g1.b.iter().zip(x1.b.iter().zip(x2.b.iter())) {
            inner += gb * (v2 - v1);
        }
        let s1 = x1.s.to_dense();
        let s2 = x2.s.to_dense();
        for (gs, (v1, v2)) in g1.s.iter().zip(s1.iter().zip(s2.iter())) {
            inner += gs * (v2 - v1);
        }
        let dist = x1.distance(&x2);
        let base = g_val(&x1) + inner;
        let lower = base + 0.5 * l * dist * dist;
        let upper = base + 1.5 * l * dist * dist;
        let val = g_val(&x2);
        let scale = 1.0 + val.abs().max(lower.abs()).max(upper.abs());
        let lower_violation = (lower - val).max(0.0) / scale;
        let upper_violation = (val - upper).max(0.0) / scale;
        lower_violation.max(upper_violation)
    });
    let max_err = results.iter().copied().fold(0.0, f64::max);
    let failures = results.iter().filter(|&&v| v > 1e-8).count();
    SuiteReport {
        suite: "convexity".into(),
        seed,
        cases,
        failures,
        max_err,
        detail: format!("max relative sandwich violation {max_err:.3e}"),
    }
}

/// A support that can always carry `(p, q)`: the northwest staircase plus
/// random extra cells.
pub(crate) fn staircase_support_matrix(
    p: &Array1<f64>,
    q: &Array1<f64>,
    extra_density: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let (m, n) = (p.len(), q.len());
    let mut x = Array2::zeros((m, n));
    let (mut i, mut j) = (0usize, 0usize);
    let mut srem = p[0];
    let mut drem = q[0];
    loop {
        x[[i, j]] = rng.random_range(0.1..1.0);
        let f = srem.min(drem);
        srem -= f;
        drem -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if srem <= drem && i < m - 1 || j == n - 1 {
            i += 1;
            srem = p[i];
        } else {
            j += 1;
            drem = q[j];
        }
    }
    for ((_, _), v) in x.indexed_iter_mut() {
        if *v == 0.0 && rng.random_bool(extra_density) {
            *v = rng.random_range(0.1..1.0);
        }
    }
    x
}

/// Projection identities: marginals hit, zeros preserved, and the
/// support-restricted ratio matrix is multiplicatively rank one.
pub fn projection_suite(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xBEEF + case));
        let m = rng.random_range(4..9usize);
        let n = rng.random_range(4..9usize);
        let p_raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let q_raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let sp: f64 = p_raw.iter().sum();
        let sq: f64 = q_raw.iter().sum();
        let p = validate_measure(&p_raw.iter().map(|v| v / sp).collect::<Vec<_>>()).unwrap();
        let q = validate_measure(&q_raw.iter().map(|v| v / sq).collect::<Vec<_>>()).unwrap();
        let x = staircase_support_matrix(p.weights(), q.weights(), 0.35, &mut rng);
        let (plan, scaling) = match sinkhorn_projection(&x, &p, &q, 1e-10, 100_000) {
            Ok(out) => out,
            Err(_) => return (f64::INFINITY, 1),
        };
        if scaling
            .d1
            .iter()
            .chain(scaling.d2.iter())
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return (f64::INFINITY, 1);
        }
        let mut err = crate::plan::marginal_error(&plan, &p, &q);
        // zeros preserved exactly
        for (xe, pe) in x.iter().zip(plan.entries().iter()) {
            if *xe == 0.0 && *pe != 0.0 {
                return (f64::INFINITY, 1);
            }
        }
        // 2x2 minors of the log ratio vanish on the support
        let t = plan.entries();
        let log_ratio = Array2::from_shape_fn((m, n), |(i, j)| {
            if x[[i, j] ] > 0.0 {
                (t[[i, j]] / x[[i, j]]).ln()
            } else {
                f64::NAN
            }
        });
        for i in 0..m {
            for k in i + 1..m {
                for j in 0..n {
                    for l in j + 1..n {
                        let (a, b, c, d) = (
                            log_ratio[[i, j]],
                            log_ratio[[k, l]],
                            log_ratio[[i, l]],
                            log_ratio[[k, j]],
                        );
                        if a.is_nan() || b.is_nan() || c.is_nan() || d.is_nan() {
                            continue;
                        }
                        err = err.max((a + b - c - d).abs());
                    }
                }
            }
        }
        (err, usize::from(err > 1e-8))
    });
    let max_err = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let failures = results.iter().map(|r| r.1).sum();
    SuiteReport {
        suite: "projection".into(),
        seed,
        cases,
        failures,
        max_err,
        detail: format!("max residual / minor defect {max_err:.3e}"),
    }
}

pub(crate) fn tiny_shape(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517E);
    let m = rng.random_range(1..5usize);
    let n = rng.random_range(1..=(crate::exact::TINY_GUARD - m).min(5));
    (m, n)
}

/// Simplex vs. exhaustive enumeration on tiny instances.
pub fn oracle_suite(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let (m, n) = tiny_shape(seed.wrapping_add(case));
        let inst = gen_random_dense_instance(m, n, seed.wrapping_add(7000 + case)).unwrap();
        let sol = solve_exact(&inst).unwrap();
        let brute = oracle_tiny(&inst).unwrap();
        let err = (sol.value - brute).abs();
        let feasible = crate::plan::marginal_error(&sol.plan, &inst.p, &inst.q) <= 1e-10;
        let vertex = sol.support_size <= m + n - 1;
        (err, usize::from(err > 1e-9 || !feasible || !vertex))
    });
    let max_err = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let failures = results.iter().map(|r| r.1).sum();
    SuiteReport {
        suite: "oracle".into(),
        seed,
        cases,
        failures,
        max_err,
        detail: format!("max |simplex − enumeration| {max_err:.3e}"),
    }
}

/// An instance with a separable cost `C_ij = f_i + g_j`: every feasible
/// plan is optimal, so the dense product coupling is a genuine optimizer
/// whose truncations keep a workable support.
pub(crate) fn separable_instance(m: usize, n: usize, seed: u64) -> (Instance, TransportPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E9A);
    let f: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let c = Array2::from_shape_fn((m, n), |(i, j)| f[i] + g[j]);
    let p_raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..1.0)).collect();
    let q_raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
    let sp: f64 = p_raw.iter().sum();
    let sq: f64 = q_raw.iter().sum();
    let p = validate_measure(&p_raw.iter().map(|v| v / sp).collect::<Vec<_>>()).unwrap();
    let q = validate_measure(&q_raw.iter().map(|v| v / sq).collect::<Vec<_>>()).unwrap();
    let mut product = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            product[[i, j]] = p.weights()[i] * q.weights()[j];
        }
    }
    let inst = Instance::new(
        format!("separable-{m}x{n}-seed{seed}"),
        p,
        q,
        CostMatrix::dense(c).unwrap(),
    )
    .unwrap();
    (inst, TransportPlan::new(product).unwrap())
}

/// One projection-gap case: optimal dense plan, truncated by dropping its
/// smallest entries while the support stays feasible. Returns
/// `(lhs, rhs)` of the inequality, or `None` when the truncation went
/// infeasible (the caller draws another seed).
pub fn psi_gap_case(seed: u64) -> Option<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A9);
    let m = rng.random_range(4..7usize);
    let n = rng.random_range(4..7usize);
    let (inst, t_star) = separable_instance(m, n, seed);
    let nnz = t_star.support_size();
    let drop = rng.random_range(1..=(nnz / 3).max(1));
    let z_tilde = best_sparse_truncation(t_star.entries(), nnz - drop);
    if !support_feasible(&z_tilde, &inst.p, &inst.q).unwrap_or(false) {
        return None;
    }
    crate::bounds::lemma_psi_gap(&t_star, &z_tilde, &inst.p, &inst.q).ok()
}

/// Bound-side properties: vertex-plan recovery through the all-sparse
/// split, the sparse truncation error chain, and the projection-gap
/// inequality on feasible truncations.
pub fn bounds_suite(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let mut failures = 0usize;
        let mut max_err: f64 = 0.0;

        // vertex plans are recovered once the sparsity budget reaches m+n−1
        let inst = gen_random_dense_instance(4, 5, seed.wrapping_add(3000 + case)).unwrap();
        let sol = solve_exact(&inst).unwrap();
        let dec = Decomposition::all_sparse(&sol.plan);
        if dec.rho_star() > 4 + 5 - 1 {
            failures += 1;
        }
        match theorem_bound(&dec, 1, 4 + 5 - 1, &inst.cost, BoundVariant::Theorem1) {
            Ok(rep) => {
                if rep.rhs != 0.0 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }

        // ‖S − S̃‖_F ≤ (ρ*−ρ)₊·U on a planted sparse part
        let planted = gen_planted_instance(5, 6, 2, 6, seed.wrapping_add(4000 + case)).unwrap();
        let parts = planted.planted.as_ref().unwrap();
        let s = parts.sparse.to_dense();
        let u = s.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        for rho in 0..=6usize {
            let trunc = best_sparse_truncation(&s, rho);
            let err = (&s - &trunc).iter().map(|v| v * v).sum::<f64>().sqrt();
            let budget = (6.0 - rho as f64).max(0.0) * u;
            let violation = (err - budget).max(0.0);
            max_err = max_err.max(violation);
            if violation > 1e-12 {
                failures += 1;
            }
        }

        // projection-gap inequality on a feasible truncation
        let mut sub_seed = seed.wrapping_add(5000 + 31 * case);
        let mut found = false;
        for _ in 0..20 {
            if let Some((lhs, rhs)) = psi_gap_case(sub_seed) {
                let violation = (lhs - rhs * (1.0 + 1e-8)).max(0.0);
                max_err = max_err.max(violation);
                if violation > 0.0 {
                    failures += 1;
                }
                found = true;
                break;
            }
            sub_seed = sub_seed.wrapping_add(1);
        }
        if !found {
            failures += 1;
        }
        (max_err, failures)
    });
    let max_err = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let failures = results.iter().map(|r| r.1).sum();
    SuiteReport {
        suite: "bounds".into(),
        seed,
        cases,
        failures,
        max_err,
        detail: format!("max bound violation {max_err:.3e}"),
    }
}

/// Feasibility rounding invariants on random near-feasible inputs.
pub fn rounding_check(seed: u64, cases: usize) -> SuiteReport {
    let results = maybe_par_map((0..cases as u64).collect(), |case| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x40D + case));
        let inst = gen_random_dense_instance(6, 5, seed.wrapping_add(case)).unwrap();
        let mut t = Array2::zeros((6, 5));
        for ((i, j), v) in t.indexed_iter_mut() {
            *v = inst.p.weights()[i] * inst.q.weights()[j] * rng.random_range(0.5..1.5);
        }
        let rounded = round_to_feasible(&t, &inst.p, &inst.q).unwrap();
        crate::plan::marginal_error(&rounded, &inst.p, &inst.q)
    });
    let max_err = results.iter().copied().fold(0.0, f64::max);
    SuiteReport {
        suite: "rounding".into(),
        seed,
        cases,
        failures: results.iter().filter(|&&v| v > 1e-12).count(),
        max_err,
        detail: format!("max marginal residual {max_err:.3e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(
            run_suite("nope", 0),
            Err(Error::UnknownSuite(_))
        ));
    }

    #[test]
    fn oracle_suite_passes() {
        let rep = oracle_suite(0, 10);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn projection_suite_passes() {
        let rep = projection_suite(0, 8);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn convexity_suite_passes() {
        let rep = convexity_suite(0, 25);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn gradient_suite_passes() {
        let rep = gradient_suite(0, 10);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn bounds_suite_passes() {
        let rep = bounds_suite(0, 4);
        assert!(rep.passed(), "{rep:?}");
    }
}
