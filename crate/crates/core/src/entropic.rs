//! Sinkhorn baseline, KL projection onto the transport polytope, and
//! feasibility rounding.

use ndarray::{Array1, Array2};

use crate::cost::{transport_cost, CostMatrix};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::measure::DiscreteMeasure;
use crate::plan::{marginal_error, TransportPlan};

/// Below `eta < LOG_DOMAIN_FACTOR · ‖C‖∞` the scaling runs in the log
/// domain; plain scalings underflow there.
pub const LOG_DOMAIN_FACTOR: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    pub value: f64,
    pub eta: f64,
    pub iterations: usize,
    /// Max-norm marginal residual of `plan`; recomputed, not accumulated.
    pub marginal_error: f64,
}

/// Positive diagonal scalings `d1`, `d2` with `plan = diag(d1)·X·diag(d2)`.
#[derive(Debug, Clone)]
pub struct ScalingPair {
    pub d1: Array1<f64>,
    pub d2: Array1<f64>,
}

/// One recorded sweep of a scaling iteration.
#[derive(Debug, Clone, Copy)]
pub struct SinkhornTraceRow {
    pub iteration: usize,
    pub marginal_error: f64,
    pub value: f64,
    /// `KL(plan‖X) = Σ T(log(T/X) − 1)` restricted to the support.
    /// Not monotone along sweeps; kept for inspection.
    pub kl: f64,
    /// Dual functional `aᵀp + bᵀq − ΣT` of the KL projection, where
    /// `a, b` are the log scalings. Each half-sweep maximizes it in one
    /// block exactly, so it ascends monotonically.
    pub dual: f64,
}

/// Default regularization for a target accuracy: `ε / (4·log(max(m,n)+1))`.
pub fn default_eta(epsilon: f64, m: usize, n: usize) -> f64 {
    epsilon / (4.0 * ((m.max(n) + 1) as f64).ln())
}

/// Entropy `H(T) = −Σ T_ij (log T_ij − 1)` with `0·(log 0 − 1) = 0`.
pub fn entropy(plan: &TransportPlan) -> f64 {
    plan.entries()
        .iter()
        .map(|&t| if t > 0.0 { -t * (t.ln() - 1.0) } else { 0.0 })
        .sum()
}

/// Entropy-regularized solve by alternating scaling on `K = exp(−C/η)`.
pub fn sinkhorn_solve(
    inst: &Instance,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    sinkhorn_solve_traced(inst, eta, tol, max_iter, None)
}

/// Same as [`sinkhorn_solve`], optionally recording one row per sweep.
pub fn sinkhorn_solve_traced(
    inst: &Instance,
    eta: f64,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<SinkhornTraceRow>>,
) -> Result<SinkhornResult> {
    if eta <= 0.0 || tol <= 0.0 {
        return Err(Error::InvalidParams("eta and tol must be positive".into()));
    }
    // drop zero-mass atoms; scaling needs strict positivity
    let rows: Vec<usize> = (0..inst.m())
        .filter(|&i| inst.p.weights()[i] > 0.0)
        .collect();
    let cols: Vec<usize> = (0..inst.n())
        .filter(|&j| inst.q.weights()[j] > 0.0)
        .collect();
    let p: Array1<f64> = rows.iter().map(|&i| inst.p.weights()[i]).collect();
    let q: Array1<f64> = cols.iter().map(|&j| inst.q.weights()[j]).collect();
    let c = {
        let full = inst.cost.materialize();
        Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            full[[rows[a], cols[b]]]
        })
    };

    let log_domain = eta < LOG_DOMAIN_FACTOR * inst.cost.inf_norm();
    let sub = if log_domain {
        sinkhorn_log_domain(&c, &p, &q, eta, tol, max_iter, trace.as_deref_mut())?
    } else {
        sinkhorn_plain(&c, &p, &q, eta, tol, max_iter, trace.as_deref_mut())?
    };

    // reinsert dropped atoms as zero rows/columns
    let mut full_plan = Array2::zeros((inst.m(), inst.n()));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            full_plan[[i, j]] = sub.plan[[a, b]];
        }
    }
    let plan = TransportPlan::new(full_plan)?;
    let value = transport_cost(&inst.cost, &plan)?;
    let me = marginal_error(&plan, &inst.p, &inst.q);
    let result = SinkhornResult {
        plan,
        value,
        eta,
        iterations: sub.iterations,
        marginal_error: me,
    };
    if me > tol {
        return Err(Error::SinkhornNonConvergence {
            residual: me,
            iterations: sub.iterations,
            best: Box::new(result),
        });
    }
    Ok(result)
}

struct ScalingOutcome {
    plan: Array2<f64>,
    iterations: usize,
}

fn kl_to_kernel(plan: &Array2<f64>, log_kernel: &Array2<f64>) -> f64 {
    plan.iter()
        .zip(log_kernel.iter())
        .map(|(&t, &lk)| if t > 0.0 { t * (t.ln() - lk - 1.0) } else { 0.0 })
        .sum()
}

fn sinkhorn_plain(
    c: &Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    eta: f64,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<SinkhornTraceRow>>,
) -> Result<ScalingOutcome> {
    let k = c.mapv(|v| (-v / eta).exp());
    let log_k = c.mapv(|v| -v / eta);
    let mut u = Array1::from_elem(p.len(), 1.0);
    let mut v = Array1::from_elem(q.len(), 1.0);
    let mut iterations = 0;
    for sweep in 1..=max_iter {
        let kv = k.dot(&v);
        if kv.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::NumericalUnderflow);
        }
        u = p / &kv;
        let ktu = k.t().dot(&u);
        if ktu.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::NumericalUnderflow);
        }
        v = q / &ktu;
        iterations = sweep;
        let plan = scaled_plan(&k, &u, &v);
        let err = plan_marginal_error(&plan, p, q);
        if let Some(rows) = trace.as_deref_mut() {
            let dual = u.mapv(f64::ln).dot(p) + v.mapv(f64::ln).dot(q) - plan.sum();
            rows.push(SinkhornTraceRow {
                iteration: sweep,
                marginal_error: err,
                value: (c * &plan).sum(),
                kl: kl_to_kernel(&plan, &log_k),
                dual,
            });
        }
        if err <= tol {
            break;
        }
    }
    let plan = scaled_plan(&k, &u, &v);
    Ok(ScalingOutcome { plan, iterations })
}

fn sinkhorn_log_domain(
    c: &Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    eta: f64,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<SinkhornTraceRow>>,
) -> Result<ScalingOutcome> {
    let (m, n) = c.dim();
    let log_k = c.mapv(|v| -v / eta);
    let log_p = p.mapv(f64::ln);
    let log_q = q.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(m); // log u
    let mut g = Array1::<f64>::zeros(n); // log v
    let mut iterations = 0;
    let mut plan = Array2::zeros((m, n));
    for sweep in 1..=max_iter {
        for i in 0..m {
            let row = log_k.row(i);
            f[i] = log_p[i] - log_sum_exp((0..n).map(|j| row[j] + g[j]));
        }
        for j in 0..n {
            g[j] = log_q[j] - log_sum_exp((0..m).map(|i| log_k[[i, j]] + f[i]));
        }
        iterations = sweep;
        for ((i, j), out) in plan.indexed_iter_mut() {
            *out = (f[i] + g[j] + log_k[[i, j]]).exp();
        }
        let err = plan_marginal_error(&plan, p, q);
        if let Some(rows) = trace.as_deref_mut() {
            let dual = f.dot(p) + g.dot(q) - plan.sum();
            rows.push(SinkhornTraceRow {
                iteration: sweep,
                marginal_error: err,
                value: (c * &plan).sum(),
                kl: kl_to_kernel(&plan, &log_k),
                dual,
            });
        }
        if err <= tol {
            break;
        }
    }
    Ok(ScalingOutcome { plan, iterations })
}

fn scaled_plan(k: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    let mut plan = k.clone();
    for ((i, j), out) in plan.indexed_iter_mut() {
        *out *= u[i] * v[j];
    }
    plan
}

fn plan_marginal_error(plan: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let r = plan.sum_axis(ndarray::Axis(1)) - p;
    let c = plan.sum_axis(ndarray::Axis(0)) - q;
    r.iter().chain(c.iter()).fold(0.0, |a, &x| a.max(x.abs()))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// KL projection of a nonnegative matrix onto the transport polytope.
///
/// Returns the unique `diag(d1)·X·diag(d2)` with the requested marginals;
/// zeros of `X` stay exactly zero. Runs in the log domain restricted to the
/// support of `X`.
pub fn sinkhorn_projection(
    x: &Array2<f64>,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<(TransportPlan, ScalingPair)> {
    let (m, n) = x.dim();
    if m != p.len() || n != q.len() {
        return Err(Error::DimensionMismatch {
            context: format!("matrix is {m}x{n} for measures {} and {}", p.len(), q.len()),
        });
    }
    for ((i, j), &v) in x.indexed_iter() {
        if v < 0.0 {
            return Err(Error::NegativeInput {
                row: i,
                col: j,
                value: v,
            });
        }
    }
    // rows/cols that must carry mass need support
    for i in 0..m {
        if p.weights()[i] > 0.0 && x.row(i).iter().all(|&v| v == 0.0) {
            return Err(Error::InfeasibleSupport);
        }
    }
    for j in 0..n {
        if q.weights()[j] > 0.0 && x.column(j).iter().all(|&v| v == 0.0) {
            return Err(Error::InfeasibleSupport);
        }
    }

    // cells in zero-mass rows or columns are forced to zero and leave the
    // scaling problem entirely
    let live = |i: usize, j: usize| {
        x[[i, j]] > 0.0 && p.weights()[i] > 0.0 && q.weights()[j] > 0.0
    };
    let row_support: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..n).filter(|&j| live(i, j)).collect())
        .collect();
    let col_support: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..m).filter(|&i| live(i, j)).collect())
        .collect();
    let log_x = x.mapv(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });

    let mut a = Array1::<f64>::zeros(m); // log d1
    let mut b = Array1::<f64>::zeros(n); // log d2
    let mut converged = false;
    let mut iterations = 0;
    for sweep in 1..=max_iter {
        for i in 0..m {
            if p.weights()[i] > 0.0 {
                let lse =
                    log_sum_exp(row_support[i].iter().map(|&j| log_x[[i, j]] + b[j]));
                a[i] = p.weights()[i].ln() - lse;
            } else {
                a[i] = 0.0;
            }
        }
        for j in 0..n {
            if q.weights()[j] > 0.0 {
                let lse =
                    log_sum_exp(col_support[j].iter().map(|&i| log_x[[i, j]] + a[i]));
                b[j] = q.weights()[j].ln() - lse;
            } else {
                b[j] = 0.0;
            }
        }
        iterations = sweep;
        let err = projection_error(&log_x, &a, &b, p, q, &row_support, &col_support);
        if err <= tol {
            converged = true;
            break;
        }
        if a.iter().chain(b.iter()).any(|&v| !v.is_finite()) {
            break;
        }
    }

    let mut plan = Array2::zeros((m, n));
    for i in 0..m {
        for &j in &row_support[i] {
            plan[[i, j]] = (log_x[[i, j]] + a[i] + b[j]).exp();
        }
    }
    if !converged {
        // distinguish a support that cannot carry the marginals from slow
        // convergence: feasibility of the support pattern is a zero-cost
        // transportation problem with forbidden off-support arcs
        if !support_feasible(x, p, q)? {
            return Err(Error::InfeasibleSupport);
        }
        let plan = TransportPlan::new(plan)?;
        let me = marginal_error(&plan, p, q);
        let value = 0.0;
        return Err(Error::SinkhornNonConvergence {
            residual: me,
            iterations,
            best: Box::new(SinkhornResult {
                plan,
                value,
                eta: f64::NAN,
                iterations,
                marginal_error: me,
            }),
        });
    }
    let plan = TransportPlan::new(plan)?;
    let scaling = ScalingPair {
        d1: a.mapv(f64::exp),
        d2: b.mapv(f64::exp),
    };
    Ok((plan, scaling))
}

fn projection_error(
    log_x: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    row_support: &[Vec<usize>],
    col_support: &[Vec<usize>],
) -> f64 {
    let mut err: f64 = 0.0;
    for (i, support) in row_support.iter().enumerate() {
        let s: f64 = support
            .iter()
            .map(|&j| (log_x[[i, j]] + a[i] + b[j]).exp())
            .sum();
        err = err.max((s - p.weights()[i]).abs());
    }
    for (j, support) in col_support.iter().enumerate() {
        let s: f64 = support
            .iter()
            .map(|&i| (log_x[[i, j]] + a[i] + b[j]).exp())
            .sum();
        err = err.max((s - q.weights()[j]).abs());
    }
    err
}

/// Can the support of `x` carry marginals `(p, q)`? Decided exactly by a
/// transportation solve that prices off-support arcs at 1 and support arcs
/// at 0.
pub fn support_feasible(
    x: &Array2<f64>,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
) -> Result<bool> {
    let indicator = x.mapv(|v| if v > 0.0 { 0.0 } else { 1.0 });
    let inst = Instance::new(
        "support-check",
        p.clone(),
        q.clone(),
        CostMatrix::dense(indicator)?,
    )?;
    let sol = crate::exact::solve_exact(&inst)?;
    Ok(sol.value <= 1e-12)
}

/// Repair marginals: scale rows down to at most `p`, columns down to at most
/// `q`, then spread the remaining deficit as a rank-one correction. The
/// output lies in the polytope exactly (residuals at rounding error) and
/// moves at most `2(‖T1−p‖₁ + ‖Tᵀ1−q‖₁)` mass in ℓ₁.
pub fn round_to_feasible(
    t: &Array2<f64>,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
) -> Result<TransportPlan> {
    let (m, n) = t.dim();
    if m != p.len() || n != q.len() {
        return Err(Error::DimensionMismatch {
            context: format!("plan is {m}x{n} for measures {} and {}", p.len(), q.len()),
        });
    }
    for ((i, j), &v) in t.indexed_iter() {
        if v < 0.0 {
            return Err(Error::NegativeInput {
                row: i,
                col: j,
                value: v,
            });
        }
    }
    let mut out = t.clone();
    for i in 0..m {
        let rs = out.row(i).sum();
        if rs > p.weights()[i] && rs > 0.0 {
            let scale = p.weights()[i] / rs;
            out.row_mut(i).mapv_inplace(|v| v * scale);
        }
    }
    for j in 0..n {
        let cs = out.column(j).sum();
        if cs > q.weights()[j] && cs > 0.0 {
            let scale = q.weights()[j] / cs;
            out.column_mut(j).mapv_inplace(|v| v * scale);
        }
    }
    let err_row = p.weights() - &out.sum_axis(ndarray::Axis(1));
    let err_col = q.weights() - &out.sum_axis(ndarray::Axis(0));
    let deficit: f64 = err_row.iter().sum();
    if deficit > 0.0 {
        for i in 0..m {
            if err_row[i] <= 0.0 {
                continue;
            }
            for j in 0..n {
                if err_col[j] > 0.0 {
                    out[[i, j]] += err_row[i] * err_col[j] / deficit;
                }
            }
        }
    }
    TransportPlan::new(out.mapv(|v| v.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_random_dense_instance;
    use crate::measure::validate_measure;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_fixtures() {
        let one = TransportPlan::new(array![[1.0]]).unwrap();
        assert_eq!(entropy(&one), 1.0);
        let zero = TransportPlan::new(Array2::zeros((2, 3))).unwrap();
        assert_eq!(entropy(&zero), 0.0);
    }

    #[test]
    fn entropy_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Array2<f64> = Array2::from_shape_fn((5, 4), |_| rng.random_range(0.0..0.1));
        let h: f64 = t.iter().map(|&v| -v * (v.ln() - 1.0)).sum();
        let plan = TransportPlan::new(t).unwrap();
        assert!((entropy(&plan) - h).abs() <= 1e-12);
    }

    #[test]
    fn one_by_one_plan_is_trivial() {
        let inst = gen_random_dense_instance(1, 1, 0).unwrap();
        let r = sinkhorn_solve(&inst, 0.5, 1e-10, 100).unwrap();
        assert!((r.plan.entries()[[0, 0]] - 1.0).abs() <= 1e-12);
        assert!((r.value - inst.cost.entry(0, 0)).abs() <= 1e-12);
    }

    #[test]
    fn huge_eta_approaches_product_coupling() {
        let inst = gen_random_dense_instance(4, 5, 2).unwrap();
        let eta = 1e6 * inst.cost.inf_norm();
        let r = sinkhorn_solve(&inst, eta, 1e-12, 10_000).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let prod = inst.p.weights()[i] * inst.q.weights()[j];
                assert!(
                    (r.plan.entries()[[i, j]] - prod).abs() <= 1e-6,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn dual_ascends_monotonically_along_sweeps() {
        // each half-sweep is an exact block maximization of the dual
        // functional, so the recorded dual never decreases; the raw
        // KL(plan ‖ K) is NOT monotone (it dips then recovers), which the
        // trace also exposes
        let inst = gen_random_dense_instance(6, 5, 9).unwrap();
        let mut rows = Vec::new();
        let _ =
            sinkhorn_solve_traced(&inst, 0.2 * inst.cost.inf_norm(), 1e-10, 2000, Some(&mut rows))
                .unwrap();
        assert!(rows.len() > 3);
        for w in rows.windows(2) {
            assert!(
                w[1].dual >= w[0].dual - 1e-12,
                "dual decreased: {} -> {}",
                w[0].dual,
                w[1].dual
            );
        }
        let kl_diffs: Vec<f64> = rows.windows(2).map(|w| w[1].kl - w[0].kl).collect();
        assert!(kl_diffs.iter().any(|&d| d < 0.0) && kl_diffs.iter().any(|&d| d > 0.0));
    }

    #[test]
    fn projection_is_identity_on_members() {
        let inst = gen_random_dense_instance(3, 4, 4).unwrap();
        let mut member = Array2::zeros((3, 4));
        for i in 0..3 {
            for j in 0..4 {
                member[[i, j]] = inst.p.weights()[i] * inst.q.weights()[j];
            }
        }
        let (plan, _) =
            sinkhorn_projection(&member, &inst.p, &inst.q, 1e-12, 10_000).unwrap();
        for (a, b) in plan.entries().iter().zip(member.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_absorbs_scalar_factors() {
        let p = validate_measure(&[0.3, 0.7]).unwrap();
        let q = validate_measure(&[0.6, 0.4]).unwrap();
        let mut x = Array2::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                x[[i, j]] = 3.0 * p.weights()[i] * q.weights()[j];
            }
        }
        let (plan, _) = sinkhorn_projection(&x, &p, &q, 1e-12, 10_000).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let prod = p.weights()[i] * q.weights()[j];
                assert!((plan.entries()[[i, j]] - prod).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn projection_of_kernel_matches_sinkhorn_solve() {
        let inst = gen_random_dense_instance(5, 4, 6).unwrap();
        let eta = 0.3 * inst.cost.inf_norm();
        let k = inst.cost.materialize().mapv(|v| (-v / eta).exp());
        let (plan, _) = sinkhorn_projection(&k, &inst.p, &inst.q, 1e-12, 100_000).unwrap();
        let solved = sinkhorn_solve(&inst, eta, 1e-12, 100_000).unwrap();
        for (a, b) in plan.entries().iter().zip(solved.plan.entries().iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_preserves_zeros_and_detects_dead_rows() {
        let p = validate_measure(&[0.5, 0.5]).unwrap();
        let q = validate_measure(&[0.5, 0.5]).unwrap();
        let x = array![[1.0, 1.0], [0.0, 0.0]];
        assert!(matches!(
            sinkhorn_projection(&x, &p, &q, 1e-9, 1000),
            Err(Error::InfeasibleSupport)
        ));
        let p = validate_measure(&[0.3, 0.7]).unwrap();
        let x = array![[1.0, 0.0], [2.0, 1.0]];
        let (plan, _) = sinkhorn_projection(&x, &p, &q, 1e-10, 10_000).unwrap();
        assert_eq!(plan.entries()[[0, 1]], 0.0);
        assert!((plan.entries()[[0, 0]] - 0.3).abs() <= 1e-10);
    }

    #[test]
    fn projection_flags_infeasible_patterns() {
        // both rows need mass but only column 1 is reachable from row 2,
        // and column 2 is reachable only from row 1 with too little mass
        let p = validate_measure(&[0.2, 0.8]).unwrap();
        let q = validate_measure(&[0.3, 0.7]).unwrap();
        let x = array![[1.0, 1.0], [1.0, 0.0]];
        // row 2 must push 0.8 through column 1 which only wants 0.3
        match sinkhorn_projection(&x, &p, &q, 1e-10, 5000) {
            Err(Error::InfeasibleSupport) => {}
            other => panic!("expected InfeasibleSupport, got {other:?}"),
        }
    }

    #[test]
    fn rounding_keeps_feasible_plans() {
        let inst = gen_random_dense_instance(4, 4, 8).unwrap();
        let mut prod = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                prod[[i, j]] = inst.p.weights()[i] * inst.q.weights()[j];
            }
        }
        let rounded = round_to_feasible(&prod, &inst.p, &inst.q).unwrap();
        for (a, b) in rounded.entries().iter().zip(prod.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn rounding_zero_gives_product_coupling() {
        let inst = gen_random_dense_instance(3, 5, 1).unwrap();
        let rounded =
            round_to_feasible(&Array2::zeros((3, 5)), &inst.p, &inst.q).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let prod = inst.p.weights()[i] * inst.q.weights()[j];
                assert!((rounded.entries()[[i, j]] - prod).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn rounding_repairs_within_l1_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for case in 0..20 {
            let inst = gen_random_dense_instance(5, 6, 100 + case).unwrap();
            let mut t = Array2::zeros((5, 6));
            for i in 0..5 {
                for j in 0..6 {
                    t[[i, j]] = inst.p.weights()[i]
                        * inst.q.weights()[j]
                        * rng.random_range(0.7..1.3);
                }
            }
            let r_l1: f64 = (t.sum_axis(ndarray::Axis(1)) - inst.p.weights())
                .iter()
                .map(|v| v.abs())
                .sum();
            let c_l1: f64 = (t.sum_axis(ndarray::Axis(0)) - inst.q.weights())
                .iter()
                .map(|v| v.abs())
                .sum();
            let rounded = round_to_feasible(&t, &inst.p, &inst.q).unwrap();
            let err = marginal_error(&rounded, &inst.p, &inst.q);
            assert!(err <= 1e-12, "marginal error {err}");
            let moved: f64 = (rounded.entries() - &t).iter().map(|v| v.abs()).sum();
            assert!(
                moved <= 2.0 * (r_l1 + c_l1) + 1e-12,
                "moved {moved} vs budget {}",
                2.0 * (r_l1 + c_l1)
            );
        }
    }

    #[test]
    fn log_abs_difference_bound_holds() {
        // |log a − log b| ≤ |a−b| / min(a,b) on 1e5 random positive pairs
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100_000 {
            let a: f64 = 10f64.powf(rng.random_range(-6.0..3.0));
            let b: f64 = 10f64.powf(rng.random_range(-6.0..3.0));
            let lhs = (a.ln() - b.ln()).abs();
            let rhs = (a - b).abs() / a.min(b);
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }
    }
}
