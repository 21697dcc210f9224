//! The low-rank-plus-sparse solver: inexact augmented Lagrangian outer loop
//! with randomized proximal BCD subproblem solves and ε-KKT certification.

pub(crate) mod bcd;
mod grad;
mod kkt;
mod prox;
mod smooth;
mod vars;

pub use bcd::{choose_block, Block};
pub use grad::{alpha_blocks, alpha_residuals, aug_lagrangian, grad_blocks, objective, GradBlocks};
pub use kkt::{coord_dist_box, coord_dist_sparse, kkt_residuals};
pub use prox::{prox_factor, prox_sparse_coord, prox_sparse_dense, shrink};
pub use smooth::{smoothness_constant, Smoothness};
pub use vars::{LsotVariables, Multipliers};

use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::sparse::SparseMat;

/// Full problem or the low-rank-only restriction (`S ≡ 0` frozen).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Lsot,
    Lot,
}

/// Gradient evaluation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradientPath {
    /// Materializes `A·Bᵀ + S` and the dense cost.
    Dense,
    /// Cached column sums plus `C·B = E(FᵀB)` groupings; sparse updates
    /// touch only candidate cells.
    Factored,
}

/// Solver configuration. `epsilon` is the KKT target; `beta0`, `sigma`,
/// `w0` drive the penalty schedule `β_t = β₀·σᵗ` and the damped dual steps.
#[derive(Debug, Clone)]
pub struct AlmConfig {
    pub epsilon: f64,
    pub beta0: f64,
    pub sigma: f64,
    pub w0: f64,
    /// Outer iteration cap.
    pub t_max: usize,
    /// Subproblem (proximal-point) rounds per outer iteration.
    pub s_max: usize,
    /// Block updates per BCD call.
    pub bcd_max_iter: usize,
    /// ℓ₁ weight; `None` picks the `(n·r)`-th largest entry of the sparse
    /// update's constant matrix at `t = 0` (clamped at zero) and freezes it.
    pub lambda: Option<f64>,
    pub rank: usize,
    pub seed: u64,
    pub mode: Mode,
    pub gradient_path: GradientPath,
    /// Use `α(x_{t+1})` instead of `α(x_t)` as the dual update direction.
    pub dual_step_at_next: bool,
    pub warm_start: Option<LsotVariables>,
}

impl AlmConfig {
    pub fn new(rank: usize) -> Self {
        AlmConfig {
            epsilon: 1e-2,
            beta0: 1.0,
            sigma: 3.0,
            w0: 1.0,
            t_max: 20,
            s_max: 200_000,
            bcd_max_iter: 2_000,
            lambda: None,
            rank,
            seed: 0,
            mode: Mode::Lsot,
            gradient_path: GradientPath::Factored,
            dual_step_at_next: false,
            warm_start: None,
        }
    }

    fn validate(&self, inst: &Instance) -> Result<()> {
        if self.rank < 1 || self.rank > inst.m().min(inst.n()) {
            return Err(Error::InvalidParams(format!(
                "rank must lie in 1..=min(m, n); got {} for {}x{}",
                self.rank,
                inst.m(),
                inst.n()
            )));
        }
        if !(self.epsilon > 0.0 && self.beta0 > 0.0 && self.sigma > 1.0 && self.w0 > 0.0) {
            return Err(Error::InvalidParams(
                "need epsilon > 0, beta0 > 0, sigma > 1, w0 > 0".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if l < 0.0 {
                return Err(Error::InvalidParams("lambda must be nonnegative".into()));
            }
        }
        if let Some(x) = &self.warm_start {
            if x.m() != inst.m() || x.n() != inst.n() || x.rank() != self.rank {
                return Err(Error::InvalidParams(
                    "warm start shape does not match instance/rank".into(),
                ));
            }
            x.check_box()?;
            if self.mode == Mode::Lot && x.s.nnz() > 0 {
                return Err(Error::InvalidParams(
                    "low-rank-only mode freezes S at zero; warm start has nonzeros".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One trace row per outer iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub t: usize,
    /// Cumulative BCD iterations after this outer iteration.
    pub s_total: usize,
    pub beta: f64,
    pub l_t: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    pub objective: f64,
    pub w_t: f64,
    pub nnz_s: usize,
    pub wall_ns: u128,
}

/// Final state and certification of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub variables: LsotVariables,
    /// The multipliers the certification was computed against.
    pub multipliers: Multipliers,
    pub objective: f64,
    pub feasibility: f64,
    pub kkt_stationarity: f64,
    pub outer_iters: usize,
    pub bcd_iters: usize,
    pub beta_final: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub epsilon: f64,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    /// Recompute the certification from the stored variables/multipliers;
    /// must reproduce the stored numbers exactly.
    pub fn recompute_certification(&self, inst: &Instance) -> (f64, f64) {
        kkt_residuals(
            &self.variables,
            &self.multipliers,
            self.beta_final,
            &inst.cost,
            inst.p.weights(),
            inst.q.weights(),
            self.lambda,
            self.mode,
        )
    }

    /// Trace CSV: `t, s_total, beta, L_t, feasibility, stationarity,
    /// objective, w_t, nnz_S, wall_ns`.
    pub fn trace_csv(&self) -> String {
        let mut out =
            String::from("t,s_total,beta,L_t,feasibility,stationarity,objective,w_t,nnz_S,wall_ns\n");
        for row in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.t,
                row.s_total,
                crate::io::fmt_f64(row.beta),
                crate::io::fmt_f64(row.l_t),
                crate::io::fmt_f64(row.feasibility),
                crate::io::fmt_f64(row.stationarity),
                crate::io::fmt_f64(row.objective),
                crate::io::fmt_f64(row.w_t),
                row.nnz_s,
                row.wall_ns
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json_string(&ReportDto::from(self))
    }
}

#[derive(Serialize)]
struct ReportDto {
    objective: f64,
    feasibility: f64,
    kkt_stationarity: f64,
    outer_iters: usize,
    bcd_iters: usize,
    beta_final: f64,
    lambda: f64,
    mode: Mode,
    epsilon: f64,
    converged: bool,
    variables: VariablesDto,
    multipliers: MultipliersDto,
    trace: Vec<TraceRow>,
}

#[derive(Serialize)]
struct VariablesDto {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    s_rows: Vec<usize>,
    s_cols: Vec<usize>,
    s_vals: Vec<f64>,
}

#[derive(Serialize)]
struct MultipliersDto {
    y_p: Vec<f64>,
    y_q: Vec<f64>,
}

impl From<&SolveReport> for ReportDto {
    fn from(r: &SolveReport) -> Self {
        ReportDto {
            objective: r.objective,
            feasibility: r.feasibility,
            kkt_stationarity: r.kkt_stationarity,
            outer_iters: r.outer_iters,
            bcd_iters: r.bcd_iters,
            beta_final: r.beta_final,
            lambda: r.lambda,
            mode: r.mode,
            epsilon: r.epsilon,
            converged: r.converged,
            variables: VariablesDto {
                a: r.variables.a.rows().into_iter().map(|x| x.to_vec()).collect(),
                b: r.variables.b.rows().into_iter().map(|x| x.to_vec()).collect(),
                s_rows: r.variables.s.iter().map(|&(i, _, _)| i).collect(),
                s_cols: r.variables.s.iter().map(|&(_, j, _)| j).collect(),
                s_vals: r.variables.s.iter().map(|&(_, _, v)| v).collect(),
            },
            multipliers: MultipliersDto {
                y_p: r.multipliers.y_p.to_vec(),
                y_q: r.multipliers.y_q.to_vec(),
            },
            trace: r.trace.clone(),
        }
    }
}

/// Hooks into a running solve; all methods default to no-ops.
pub trait SolveObserver {
    /// Called when a BCD call starts on subproblem `(t, s)`.
    fn on_bcd_start(&mut self, _t: usize, _s: usize) {}
    /// Opt in to per-update `G + h` values (they cost an extra objective
    /// evaluation per block update).
    fn wants_bcd_values(&self) -> bool {
        false
    }
    /// Called after every block update with the current `G + h` value when
    /// [`SolveObserver::wants_bcd_values`] is true.
    fn on_bcd_value(&mut self, _g_plus_h: f64) {}
    /// Called with the iterate at the end of every subproblem round.
    fn on_iterate(&mut self, _x: &LsotVariables) {}
}

struct NoopObserver;
impl SolveObserver for NoopObserver {}

/// Default start: first factor columns proportional to `√p` and `√q`,
/// scaled to unit total mass (the product coupling exactly, for uniform
/// marginals); remaining columns and `S` are zero.
pub fn default_init(p: &Array1<f64>, q: &Array1<f64>, rank: usize) -> LsotVariables {
    let (m, n) = (p.len(), q.len());
    let sqrt_p = p.mapv(f64::sqrt);
    let sqrt_q = q.mapv(f64::sqrt);
    let mut a = Array2::zeros((m, rank));
    let mut b = Array2::zeros((n, rank));
    let sp = sqrt_p.sum();
    let sq = sqrt_q.sum();
    for i in 0..m {
        a[[i, 0]] = sqrt_p[i] / sp;
    }
    for j in 0..n {
        b[[j, 0]] = sqrt_q[j] / sq;
    }
    LsotVariables {
        a,
        b,
        s: SparseMat::zeros(m, n),
    }
}

/// The frozen ℓ₁ weight: the `(n·r)`-th largest entry of
/// `D = −C + (β₀p − yᵖ)1ᵀ + 1(β₀q − y^q)ᵀ + 2L₀·S₀` at `t = 0`, clamped
/// at zero. Keeps the shrinkage support at `O(nr)` cells.
pub fn default_lambda(
    cost: &CostMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    beta0: f64,
    l0: f64,
    s0: &SparseMat,
    rank: usize,
) -> f64 {
    let (m, n) = (p.len(), q.len());
    let mut d = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            d.push(-cost.entry(i, j) + beta0 * (p[i] + q[j]) + 2.0 * l0 * s0.get(i, j));
        }
    }
    let k = (n * rank).min(d.len());
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    d[k - 1].max(0.0)
}

/// Damped dual step size
/// `w_t = w₀·min{1, log²(2‖α(x₁)‖) / ((t+1)·log²(t+2)·‖α(x_{t+1})‖)}`;
/// a zero current residual means the second argument is `+∞`, so `w₀`.
pub fn dual_stepsize(t: usize, w0: f64, alpha_norm_1: f64, alpha_norm_tplus1: f64) -> f64 {
    if alpha_norm_tplus1 == 0.0 {
        return w0;
    }
    let num = (2.0 * alpha_norm_1).ln().powi(2);
    let den = (t as f64 + 1.0) * ((t as f64 + 2.0).ln().powi(2)) * alpha_norm_tplus1;
    w0 * (num / den).min(1.0)
}

/// Subproblem description for a standalone BCD call: minimize
/// `G(x) = 𝔏(x, y, β) + L_t‖x − x̄‖² + h(x)` from `x0`.
pub struct SubproblemSpec<'a> {
    pub anchor: &'a LsotVariables,
    pub y: &'a Multipliers,
    pub beta: f64,
    pub l_t: f64,
    pub cost: &'a CostMatrix,
    pub p: &'a Array1<f64>,
    pub q: &'a Array1<f64>,
    pub lambda: f64,
    pub mode: Mode,
    pub gradient_path: GradientPath,
}

/// Run BCD until `dist(−∇G, ∂h) ≤ delta`. The sampler is keyed by
/// `(seed, t, s, τ)`; pass the `(seed, t, s)` prefix in `key`.
pub fn bcd(
    spec: &SubproblemSpec,
    x0: LsotVariables,
    delta: f64,
    max_iter: usize,
    key: (u64, u64, u64),
) -> Result<LsotVariables> {
    let mut engine = bcd::Engine::new(
        spec.cost,
        spec.p,
        spec.q,
        spec.y,
        spec.beta,
        spec.l_t,
        spec.lambda,
        spec.mode,
        spec.gradient_path,
        x0,
        spec.anchor,
    );
    let out = bcd::run_bcd(&mut engine, delta, max_iter, key.0, key.1, key.2, None);
    if out.hit_cap {
        return Err(Error::IterationCapReached {
            stationarity: out.stationarity,
        });
    }
    Ok(engine.into_variables())
}

/// Inexact augmented Lagrangian solve.
pub fn ialm(inst: &Instance, config: &AlmConfig) -> Result<SolveReport> {
    ialm_observed(inst, config, &mut NoopObserver)
}

/// [`ialm`] with instrumentation hooks.
pub fn ialm_observed(
    inst: &Instance,
    config: &AlmConfig,
    observer: &mut dyn SolveObserver,
) -> Result<SolveReport> {
    config.validate(inst)?;
    let p = inst.p.weights().clone();
    let q = inst.q.weights().clone();
    let r = config.rank;

    // the dense path works on a materialized cost
    let cost_owned;
    let cost: &CostMatrix = match (config.gradient_path, &inst.cost) {
        (GradientPath::Dense, CostMatrix::Factored { .. }) => {
            cost_owned = CostMatrix::Dense(inst.cost.materialize());
            &cost_owned
        }
        _ => &inst.cost,
    };

    let mut x = match &config.warm_start {
        Some(w) => w.clone(),
        None => default_init(&p, &q, r),
    };
    let mut y = Multipliers::zeros(p.len(), q.len());

    let lambda = if config.mode == Mode::Lot {
        0.0
    } else {
        config.lambda.unwrap_or_else(|| {
            let l0 = smoothness_constant(&y, config.beta0, cost, &p, &q, r).l;
            default_lambda(cost, &p, &q, config.beta0, l0, &x.s, r)
        })
    };

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut total_bcd = 0usize;
    let mut alpha1_norm = f64::NAN;
    let mut last_cert = (f64::NAN, f64::NAN);
    let solve_start = Instant::now();

    for t in 0..config.t_max {
        let iter_start = Instant::now();
        let beta_t = config.beta0 * config.sigma.powi(t as i32);
        let l_t = smoothness_constant(&y, beta_t, cost, &p, &q, r).l;
        let x_t = x.clone();

        let mut engine = bcd::Engine::new(
            cost,
            &p,
            &q,
            &y,
            beta_t,
            l_t,
            lambda,
            config.mode,
            config.gradient_path,
            x.clone(),
            &x,
        );
        let record_values = observer.wants_bcd_values();
        for s_idx in 0..config.s_max {
            observer.on_bcd_start(t, s_idx);
            let mut hook = |v: f64| observer.on_bcd_value(v);
            let out = bcd::run_bcd(
                &mut engine,
                config.epsilon / 4.0,
                config.bcd_max_iter,
                config.seed,
                t as u64,
                s_idx as u64,
                if record_values { Some(&mut hook) } else { None },
            );
            total_bcd += out.iterations;
            let moved = engine.distance_to_anchor();
            if !moved.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("iterate at outer {t}, subproblem {s_idx}"),
                });
            }
            if 2.0 * l_t * moved <= config.epsilon / 2.0 {
                break;
            }
            engine.reanchor();
        }
        x = engine.into_variables();
        observer.on_iterate(&x);
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: format!("iterate after outer {t}"),
            });
        }

        let alpha_next_norm = grad::alpha_norm(&x, &p, &q);
        if t == 0 {
            alpha1_norm = alpha_next_norm;
        }
        let w_t = dual_stepsize(t, config.w0, alpha1_norm, alpha_next_norm);

        // certify against the multiplier the subproblems used
        let (feasibility, stationarity) =
            kkt_residuals(&x, &y, beta_t, cost, &p, &q, lambda, config.mode);
        last_cert = (feasibility, stationarity);
        let obj = objective(&x, cost);
        trace.push(TraceRow {
            t,
            s_total: total_bcd,
            beta: beta_t,
            l_t,
            feasibility,
            stationarity,
            objective: obj,
            w_t,
            nnz_s: x.s.nnz(),
            wall_ns: iter_start.elapsed().as_nanos(),
        });

        if feasibility <= config.epsilon && stationarity <= config.epsilon {
            let _ = solve_start;
            return Ok(SolveReport {
                variables: x,
                multipliers: y,
                objective: obj,
                feasibility,
                kkt_stationarity: stationarity,
                outer_iters: t + 1,
                bcd_iters: total_bcd,
                beta_final: beta_t,
                lambda,
                mode: config.mode,
                epsilon: config.epsilon,
                converged: true,
                trace,
            });
        }

        let direction = if config.dual_step_at_next {
            grad::alpha_residuals(&x, &p, &q)
        } else {
            grad::alpha_residuals(&x_t, &p, &q)
        };
        let m = p.len();
        for i in 0..m {
            y.y_p[i] += w_t * direction[i];
        }
        for j in 0..q.len() {
            y.y_q[j] += w_t * direction[m + j];
        }
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: format!("multipliers after outer {t}"),
            });
        }
    }

    let beta_last = config.beta0 * config.sigma.powi(config.t_max as i32 - 1);
    let report = SolveReport {
        objective: objective(&x, cost),
        variables: x,
        multipliers: y,
        feasibility: last_cert.0,
        kkt_stationarity: last_cert.1,
        outer_iters: config.t_max,
        bcd_iters: total_bcd,
        beta_final: beta_last,
        lambda,
        mode: config.mode,
        epsilon: config.epsilon,
        converged: false,
        trace,
    };
    Err(Error::NotConverged {
        feasibility: report.feasibility,
        stationarity: report.kkt_stationarity,
        report: Box::new(report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_permutation_instance, gen_random_dense_instance};

    #[test]
    fn dual_stepsize_fixture() {
        // t = 0 with both norms equal to a
        let a: f64 = 3.0;
        let w0 = 0.7;
        let expect = w0 * ((2.0 * a).ln().powi(2) / (2.0f64.ln().powi(2) * a)).min(1.0);
        assert!((dual_stepsize(0, w0, a, a) - expect).abs() <= 1e-15);
    }

    #[test]
    fn dual_stepsize_zero_residual_returns_w0() {
        assert_eq!(dual_stepsize(5, 0.3, 1.0, 0.0), 0.3);
    }

    #[test]
    fn dual_stepsize_decreases_in_t() {
        let mut last = f64::INFINITY;
        for t in 1..=100 {
            let w = dual_stepsize(t, 1.0, 0.9, 0.9);
            assert!(w <= last + 1e-15, "t = {t}");
            last = w;
        }
    }

    #[test]
    fn zero_cost_instance_certifies_fast() {
        // any feasible point is optimal; the product-coupling start is
        // feasible, so the first outer iteration certifies
        let mut inst = gen_random_dense_instance(5, 5, 3).unwrap();
        inst.cost = CostMatrix::dense(Array2::zeros((5, 5))).unwrap();
        let mut config = AlmConfig::new(2);
        config.epsilon = 1e-3;
        let report = ialm(&inst, &config).unwrap();
        assert!(report.converged);
        assert!(report.objective.abs() <= 1e-12);
        assert!(report.feasibility <= 1e-3);
        let (f2, s2) = report.recompute_certification(&inst);
        assert!((f2 - report.feasibility).abs() <= 1e-12);
        assert!((s2 - report.kkt_stationarity).abs() <= 1e-12);
    }

    #[test]
    fn lot_mode_keeps_s_empty() {
        let inst = gen_permutation_instance(6, 1).unwrap();
        let mut config = AlmConfig::new(2);
        config.mode = Mode::Lot;
        config.epsilon = 5e-2;
        config.t_max = 25;
        match ialm(&inst, &config) {
            Ok(report) => assert_eq!(report.variables.s.nnz(), 0),
            Err(Error::NotConverged { report, .. }) => {
                assert_eq!(report.variables.s.nnz(), 0)
            }
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let inst = gen_permutation_instance(5, 4).unwrap();
        let mut config = AlmConfig::new(2);
        config.epsilon = 3e-2;
        config.t_max = 12;
        let run = |c: &AlmConfig| match ialm(&inst, c) {
            Ok(r) => r,
            Err(Error::NotConverged { report, .. }) => *report,
            Err(e) => panic!("{e:?}"),
        };
        let r1 = run(&config);
        let r2 = run(&config);
        assert_eq!(r1.objective, r2.objective);
        assert_eq!(r1.feasibility, r2.feasibility);
        assert_eq!(r1.bcd_iters, r2.bcd_iters);
        assert!(r1.variables.sup_distance(&r2.variables) == 0.0);
    }

    #[test]
    fn rank_validation() {
        let inst = gen_permutation_instance(3, 0).unwrap();
        let config = AlmConfig::new(7);
        assert!(matches!(
            ialm(&inst, &config),
            Err(Error::InvalidParams(_))
        ));
    }
}
