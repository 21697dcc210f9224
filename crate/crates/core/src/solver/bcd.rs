//! Randomized proximal block coordinate descent on one subproblem
//! `G(x) = 𝔏(x, y, β) + L_t‖x − x̄‖²`.
//!
//! One iteration updates a uniformly chosen block with a prox step of
//! constant `3·L_t` and then checks the stationarity distance of `G`.
//! The factored path never touches all `m·n` sparse coordinates: the only
//! cells a shrinkage step can leave positive are the support of the current
//! iterate plus the cells where the constant matrix `D` of the update
//! exceeds `λ`, both known up front. The hot loop works in preallocated
//! buffers; one engine serves a whole outer iteration and is re-anchored
//! between proximal-point rounds.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};

use crate::cost::CostMatrix;
use crate::sparse::SparseMat;

use super::kkt::{coord_dist_box, coord_dist_sparse};
use super::prox::{clamp01, prox_sparse_coord, shrink};
use super::vars::{LsotVariables, Multipliers};
use super::{GradientPath, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A,
    B,
    S,
}

/// Counter-based block choice keyed by `(seed, t, s, τ)`: reproducible and
/// uncorrelated across subproblems without carrying RNG state.
pub fn choose_block(seed: u64, t: u64, s: u64, tau: u64, lot: bool) -> Block {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = mix(seed);
    state = mix(state ^ t);
    state = mix(state ^ s);
    state = mix(state ^ tau);
    let n_blocks = if lot { 2 } else { 3 };
    match state % n_blocks {
        0 => Block::A,
        1 => Block::B,
        _ => Block::S,
    }
}

pub(crate) struct Engine<'a> {
    pub cost: &'a CostMatrix,
    pub p: &'a Array1<f64>,
    pub q: &'a Array1<f64>,
    pub y: &'a Multipliers,
    pub beta: f64,
    pub l_t: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub path: GradientPath,
    // iterate
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub s: SparseMat,
    // anchor x̄ of the prox term
    a0: Array2<f64>,
    b0: Array2<f64>,
    s0: SparseMat,
    // caches kept current with the iterate
    colsum_a: Array1<f64>,
    colsum_b: Array1<f64>,
    s_row: Array1<f64>,
    s_col: Array1<f64>,
    cb: Array2<f64>,
    cta: Array2<f64>,
    // scratch buffers
    u: Array1<f64>,
    v: Array1<f64>,
    vtb: Array1<f64>,
    uta: Array1<f64>,
    tmp_dr_m: Array2<f64>,
    tmp_dr_n: Array2<f64>,
    v_sorted: Vec<(f64, usize)>,
    s_next: Vec<(usize, usize, f64)>,
    /// `{(i,j) : −C_ij + (βp_i − yᵖ_i) + (βq_j − y^q_j) > λ}`, fixed for
    /// the lifetime of the engine (depends only on `y`, `β`, `λ`).
    dpos_fixed: Vec<(usize, usize)>,
    /// Superset of every support the sparse iterate can take within the
    /// current round: `dpos_fixed ∪ supp(S̄)`, row-major sorted.
    cand: Vec<(usize, usize)>,
}

impl<'a> Engine<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cost: &'a CostMatrix,
        p: &'a Array1<f64>,
        q: &'a Array1<f64>,
        y: &'a Multipliers,
        beta: f64,
        l_t: f64,
        lambda: f64,
        mode: Mode,
        path: GradientPath,
        start: LsotVariables,
        anchor: &LsotVariables,
    ) -> Self {
        let (m, n, r) = (start.m(), start.n(), start.rank());
        let d = match cost {
            CostMatrix::Dense(_) => 0,
            CostMatrix::Factored { e, .. } => e.ncols(),
        };
        let colsum_a = start.a.sum_axis(Axis(0));
        let colsum_b = start.b.sum_axis(Axis(0));
        let s_row = start.s.row_sums();
        let s_col = start.s.col_sums();
        let cb = cost.times(&start.b);
        let cta = cost.t_times(&start.a);
        let mut engine = Engine {
            cost,
            p,
            q,
            y,
            beta,
            l_t,
            lambda,
            mode,
            path,
            a: start.a,
            b: start.b,
            s: start.s,
            a0: anchor.a.clone(),
            b0: anchor.b.clone(),
            s0: anchor.s.clone(),
            colsum_a,
            colsum_b,
            s_row,
            s_col,
            cb,
            cta,
            u: Array1::zeros(m),
            v: Array1::zeros(n),
            vtb: Array1::zeros(r),
            uta: Array1::zeros(r),
            tmp_dr_m: Array2::zeros((d, r)),
            tmp_dr_n: Array2::zeros((d, r)),
            v_sorted: Vec::with_capacity(n),
            s_next: Vec::new(),
            dpos_fixed: Vec::new(),
            cand: Vec::new(),
        };
        if mode == Mode::Lsot {
            engine.dpos_fixed = engine.build_dpos_fixed();
            engine.rebuild_candidates();
        }
        engine
    }

    /// Re-anchor the prox term at the current iterate (next proximal-point
    /// round of the same outer iteration).
    pub fn reanchor(&mut self) {
        self.a0.assign(&self.a);
        self.b0.assign(&self.b);
        self.s0 = self.s.clone();
        if self.mode == Mode::Lsot {
            self.rebuild_candidates();
        }
    }

    pub fn into_variables(self) -> LsotVariables {
        LsotVariables {
            a: self.a,
            b: self.b,
            s: self.s,
        }
    }

    pub fn variables(&self) -> LsotVariables {
        LsotVariables {
            a: self.a.clone(),
            b: self.b.clone(),
            s: self.s.clone(),
        }
    }

    fn m(&self) -> usize {
        self.a.nrows()
    }

    fn n(&self) -> usize {
        self.b.nrows()
    }

    /// Off-anchor cells can only survive a shrinkage step when
    /// `D_ij = −C_ij + d_i + e_j > λ` (the `2L·S̄` term vanishes there and
    /// `C ≥ 0` bounds the probe set by `d_i + e_j > λ`).
    fn build_dpos_fixed(&self) -> Vec<(usize, usize)> {
        let (m, n) = (self.m(), self.n());
        let mut out = Vec::new();
        let d_row: Vec<f64> = (0..m).map(|i| self.beta * self.p[i] - self.y.y_p[i]).collect();
        let mut e_sorted: Vec<(f64, usize)> = (0..n)
            .map(|j| (self.beta * self.q[j] - self.y.y_q[j], j))
            .collect();
        e_sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (i, &di) in d_row.iter().enumerate() {
            for &(ej, j) in &e_sorted {
                if di + ej <= self.lambda {
                    break;
                }
                if di + ej - self.cost.entry(i, j) > self.lambda {
                    out.push((i, j));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn rebuild_candidates(&mut self) {
        let mut cand: Vec<(usize, usize)> = self
            .dpos_fixed
            .iter()
            .copied()
            .chain(self.s.iter().map(|&(i, j, _)| (i, j)))
            .chain(self.s0.iter().map(|&(i, j, _)| (i, j)))
            .collect();
        cand.sort_unstable();
        cand.dedup();
        self.cand = cand;
    }

    /// Refresh `u = yᵖ + β·α_rows`, `v = y^q + β·α_cols` from the caches.
    fn refresh_uv(&mut self) {
        match self.path {
            GradientPath::Factored => {
                general_mat_mul(
                    1.0,
                    &self.a,
                    &self.colsum_b.view().insert_axis(Axis(1)),
                    0.0,
                    &mut self.u.view_mut().insert_axis(Axis(1)),
                );
                for i in 0..self.m() {
                    self.u[i] = self.y.y_p[i]
                        + self.beta * (self.u[i] + self.s_row[i] - self.p[i]);
                }
                general_mat_mul(
                    1.0,
                    &self.b,
                    &self.colsum_a.view().insert_axis(Axis(1)),
                    0.0,
                    &mut self.v.view_mut().insert_axis(Axis(1)),
                );
                for j in 0..self.n() {
                    self.v[j] = self.y.y_q[j]
                        + self.beta * (self.v[j] + self.s_col[j] - self.q[j]);
                }
            }
            GradientPath::Dense => {
                let t = self.a.dot(&self.b.t()) + self.s.to_dense();
                let ar = t.sum_axis(Axis(1));
                let ac = t.sum_axis(Axis(0));
                for i in 0..self.m() {
                    self.u[i] = self.y.y_p[i] + self.beta * (ar[i] - self.p[i]);
                }
                for j in 0..self.n() {
                    self.v[j] = self.y.y_q[j] + self.beta * (ac[j] - self.q[j]);
                }
            }
        }
    }

    /// `C·B` into the cache (dense gemm, or `E(FᵀB)` without forming `C`).
    fn refresh_cb(&mut self) {
        match (self.path, self.cost) {
            (GradientPath::Factored, CostMatrix::Factored { e, f }) => {
                general_mat_mul(1.0, &f.t(), &self.b, 0.0, &mut self.tmp_dr_m);
                general_mat_mul(1.0, e, &self.tmp_dr_m, 0.0, &mut self.cb);
            }
            _ => {
                let c = match self.cost {
                    CostMatrix::Dense(c) => c,
                    CostMatrix::Factored { .. } => unreachable!("dense path holds a dense cost"),
                };
                general_mat_mul(1.0, c, &self.b, 0.0, &mut self.cb);
            }
        }
    }

    fn refresh_cta(&mut self) {
        match (self.path, self.cost) {
            (GradientPath::Factored, CostMatrix::Factored { e, f }) => {
                general_mat_mul(1.0, &e.t(), &self.a, 0.0, &mut self.tmp_dr_n);
                general_mat_mul(1.0, f, &self.tmp_dr_n, 0.0, &mut self.cta);
            }
            _ => {
                let c = match self.cost {
                    CostMatrix::Dense(c) => c,
                    CostMatrix::Factored { .. } => unreachable!("dense path holds a dense cost"),
                };
                general_mat_mul(1.0, &c.t(), &self.a, 0.0, &mut self.cta);
            }
        }
    }

    fn grad_s_at(&self, i: usize, j: usize) -> f64 {
        self.cost.entry(i, j)
            + self.u[i]
            + self.v[j]
            + 2.0 * self.l_t * (self.s.get(i, j) - self.s0.get(i, j))
    }

    pub fn step(&mut self, block: Block) {
        self.refresh_uv();
        let step_l = 3.0 * self.l_t;
        let two_l = 2.0 * self.l_t;
        match block {
            Block::A => {
                // vᵀB once, then fuse gradient and prox per entry
                general_mat_mul(
                    1.0,
                    &self.b.t(),
                    &self.v.view().insert_axis(Axis(1)),
                    0.0,
                    &mut self.vtb.view_mut().insert_axis(Axis(1)),
                );
                let (m, r) = self.a.dim();
                for i in 0..m {
                    for k in 0..r {
                        let g = self.cb[[i, k]]
                            + self.u[i] * self.colsum_b[k]
                            + self.vtb[k]
                            + two_l * (self.a[[i, k]] - self.a0[[i, k]]);
                        self.a[[i, k]] = clamp01(self.a[[i, k]] - g / step_l);
                    }
                }
                self.colsum_a = self.a.sum_axis(Axis(0));
                self.refresh_cta();
            }
            Block::B => {
                general_mat_mul(
                    1.0,
                    &self.a.t(),
                    &self.u.view().insert_axis(Axis(1)),
                    0.0,
                    &mut self.uta.view_mut().insert_axis(Axis(1)),
                );
                let (n, r) = self.b.dim();
                for j in 0..n {
                    for k in 0..r {
                        let g = self.cta[[j, k]]
                            + self.v[j] * self.colsum_a[k]
                            + self.uta[k]
                            + two_l * (self.b[[j, k]] - self.b0[[j, k]]);
                        self.b[[j, k]] = clamp01(self.b[[j, k]] - g / step_l);
                    }
                }
                self.colsum_b = self.b.sum_axis(Axis(0));
                self.refresh_cb();
            }
            Block::S => match self.path {
                GradientPath::Dense => {
                    let (m, n) = (self.m(), self.n());
                    let s_dense = self.s.to_dense();
                    let s0_dense = self.s0.to_dense();
                    let mut next = Array2::zeros((m, n));
                    for ((i, j), slot) in next.indexed_iter_mut() {
                        let g = self.cost.entry(i, j)
                            + self.u[i]
                            + self.v[j]
                            + two_l * (s_dense[[i, j]] - s0_dense[[i, j]]);
                        *slot = prox_sparse_coord(s_dense[[i, j]], g, step_l, self.lambda);
                    }
                    self.s = SparseMat::from_dense(&next);
                    self.s_row = self.s.row_sums();
                    self.s_col = self.s.col_sums();
                }
                GradientPath::Factored => {
                    let mut triples = std::mem::take(&mut self.s_next);
                    triples.clear();
                    for idx in 0..self.cand.len() {
                        let (i, j) = self.cand[idx];
                        let cur = self.s.get(i, j);
                        let g = self.grad_s_at(i, j);
                        let z = cur - g / step_l;
                        let val = clamp01(shrink(z, self.lambda / step_l));
                        if val != 0.0 {
                            triples.push((i, j, val));
                        }
                    }
                    let next =
                        SparseMat::from_triples(self.m(), self.n(), triples.iter().copied());
                    self.s_next = triples;
                    self.s = next;
                    self.s_row = self.s.row_sums();
                    self.s_col = self.s.col_sums();
                }
            },
        }
    }

    /// `dist(−∇G(x), ∂h(x))` at the current iterate.
    pub fn stationarity(&mut self) -> f64 {
        self.refresh_uv();
        let two_l = 2.0 * self.l_t;
        let mut acc = 0.0;
        // A block: g = CB + u·(1ᵀB) + 1·(vᵀB) + 2L(A − Ā), fused
        general_mat_mul(
            1.0,
            &self.b.t(),
            &self.v.view().insert_axis(Axis(1)),
            0.0,
            &mut self.vtb.view_mut().insert_axis(Axis(1)),
        );
        let (m, r) = self.a.dim();
        for i in 0..m {
            for k in 0..r {
                let g = self.cb[[i, k]]
                    + self.u[i] * self.colsum_b[k]
                    + self.vtb[k]
                    + two_l * (self.a[[i, k]] - self.a0[[i, k]]);
                let d = coord_dist_box(self.a[[i, k]], g);
                acc += d * d;
            }
        }
        general_mat_mul(
            1.0,
            &self.a.t(),
            &self.u.view().insert_axis(Axis(1)),
            0.0,
            &mut self.uta.view_mut().insert_axis(Axis(1)),
        );
        let n = self.b.nrows();
        for j in 0..n {
            for k in 0..r {
                let g = self.cta[[j, k]]
                    + self.v[j] * self.colsum_a[k]
                    + self.uta[k]
                    + two_l * (self.b[[j, k]] - self.b0[[j, k]]);
                let d = coord_dist_box(self.b[[j, k]], g);
                acc += d * d;
            }
        }
        if self.mode == Mode::Lsot {
            acc += match self.path {
                GradientPath::Dense => self.s_stationarity_dense(),
                GradientPath::Factored => self.s_stationarity_factored(),
            };
        }
        acc.sqrt()
    }

    fn s_stationarity_dense(&self) -> f64 {
        let s_dense = self.s.to_dense();
        let s0_dense = self.s0.to_dense();
        let mut acc = 0.0;
        for ((i, j), &value) in s_dense.indexed_iter() {
            let g = self.cost.entry(i, j)
                + self.u[i]
                + self.v[j]
                + 2.0 * self.l_t * (value - s0_dense[[i, j]]);
            let d = coord_dist_sparse(value, g, self.lambda);
            acc += d * d;
        }
        acc
    }

    /// Zero coordinates off every tracked support contribute only when
    /// `u_i + v_j < −λ` (`C ≥ 0` and the anchor term vanishes there);
    /// those pairs are found against a sorted copy of `v`.
    fn s_stationarity_factored(&mut self) -> f64 {
        let mut acc = 0.0;
        for idx in 0..self.cand.len() {
            let (i, j) = self.cand[idx];
            let value = self.s.get(i, j);
            let g = self.grad_s_at(i, j);
            let d = coord_dist_sparse(value, g, self.lambda);
            acc += d * d;
        }
        self.v_sorted.clear();
        self.v_sorted
            .extend(self.v.iter().copied().zip(0..self.n()));
        self.v_sorted
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for i in 0..self.m() {
            let ui = self.u[i];
            for idx in 0..self.v_sorted.len() {
                let (vj, j) = self.v_sorted[idx];
                if ui + vj >= -self.lambda {
                    break;
                }
                if self.cand.binary_search(&(i, j)).is_ok() {
                    continue;
                }
                let g = self.cost.entry(i, j) + ui + vj;
                let d = coord_dist_sparse(0.0, g, self.lambda);
                acc += d * d;
            }
        }
        acc
    }

    /// `G(x) + h(x)` for descent monitoring (indicators are zero inside
    /// the box, which prox steps guarantee).
    pub fn g_plus_h(&self) -> f64 {
        let x = self.variables();
        let anchor = LsotVariables {
            a: self.a0.clone(),
            b: self.b0.clone(),
            s: self.s0.clone(),
        };
        let prox = x.distance(&anchor);
        super::grad::aug_lagrangian(&x, self.y, self.beta, self.cost, self.p, self.q)
            + self.l_t * prox * prox
            + self.lambda * x.s.abs_sum()
    }

    /// Euclidean distance from the current iterate to the anchor.
    pub fn distance_to_anchor(&self) -> f64 {
        let anchor = LsotVariables {
            a: self.a0.clone(),
            b: self.b0.clone(),
            s: self.s0.clone(),
        };
        self.variables().distance(&anchor)
    }
}

pub(crate) struct BcdOutcome {
    pub iterations: usize,
    pub stationarity: f64,
    pub hit_cap: bool,
}

/// Run BCD until `dist(−∇G, ∂h) ≤ delta`, checking at entry and after
/// every block update.
pub(crate) fn run_bcd(
    engine: &mut Engine,
    delta: f64,
    max_iter: usize,
    seed: u64,
    outer_t: u64,
    subproblem_s: u64,
    mut on_value: Option<&mut dyn FnMut(f64)>,
) -> BcdOutcome {
    let mut stationarity = engine.stationarity();
    if stationarity <= delta {
        return BcdOutcome {
            iterations: 0,
            stationarity,
            hit_cap: false,
        };
    }
    let lot = engine.mode == Mode::Lot;
    for tau in 0..max_iter {
        let block = choose_block(seed, outer_t, subproblem_s, tau as u64, lot);
        engine.step(block);
        if let Some(cb) = on_value.as_deref_mut() {
            cb(engine.g_plus_h());
        }
        stationarity = engine.stationarity();
        if stationarity <= delta {
            return BcdOutcome {
                iterations: tau + 1,
                stationarity,
                hit_cap: false,
            };
        }
    }
    BcdOutcome {
        iterations: max_iter,
        stationarity,
        hit_cap: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_random_dense_instance;
    use crate::solver::smooth::smoothness_constant;

    fn block_counts(seed: u64, n: usize) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for tau in 0..n {
            match choose_block(seed, 1, 2, tau as u64, false) {
                Block::A => counts[0] += 1,
                Block::B => counts[1] += 1,
                Block::S => counts[2] += 1,
            }
        }
        counts
    }

    #[test]
    fn block_choice_is_deterministic_and_roughly_uniform() {
        assert_eq!(
            choose_block(7, 1, 2, 3, false),
            choose_block(7, 1, 2, 3, false)
        );
        let counts = block_counts(0, 30_000);
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 600.0, "counts {counts:?}");
        }
        // LOT never selects S
        for tau in 0..1000 {
            assert_ne!(choose_block(3, 0, 0, tau, true), Block::S);
        }
    }

    #[test]
    fn sparse_update_equals_one_third_current_form() {
        // stepping S with constant 3L on a gradient containing 2L(S − S̄)
        // reproduces the (1/3)S_τ + (2/3)S̄ − ∇𝔏/(3L) shrinkage form
        let inst = gen_random_dense_instance(4, 4, 2).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let y = Multipliers::zeros(4, 4);
        let sm = smoothness_constant(&y, 1.0, &inst.cost, &p, &q, 2);
        let mut start = LsotVariables::zeros(4, 4, 2);
        start.s = crate::sparse::SparseMat::from_triples(
            4,
            4,
            vec![(0, 0, 0.4), (1, 2, 0.2), (3, 3, 0.9)],
        );
        let anchor = start.clone();
        let lambda = 1e-4;
        let mut engine = Engine::new(
            &inst.cost,
            &p,
            &q,
            &y,
            1.0,
            sm.l,
            lambda,
            Mode::Lsot,
            GradientPath::Factored,
            start.clone(),
            &anchor,
        );
        engine.refresh_uv();
        let (u, v) = (engine.u.clone(), engine.v.clone());
        let l = sm.l;
        let mut expected: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let grad_l = inst.cost.entry(i, j) + u[i] + v[j];
                let z = start.s.get(i, j) / 3.0 + 2.0 * anchor.s.get(i, j) / 3.0
                    - grad_l / (3.0 * l);
                let val = clamp01(shrink(z, lambda / (3.0 * l)));
                if val != 0.0 {
                    expected.push((i, j, val));
                }
            }
        }
        engine.step(Block::S);
        let got = engine.s.to_dense();
        let want =
            crate::sparse::SparseMat::from_triples(4, 4, expected).to_dense();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn already_stationary_start_returns_without_updates() {
        // a feasible product coupling with zero cost is a minimizer, so the
        // entry check fires immediately
        let inst = gen_random_dense_instance(3, 3, 5).unwrap();
        let zero_cost = CostMatrix::dense(Array2::zeros((3, 3))).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let mut a = Array2::zeros((3, 1));
        let mut b = Array2::zeros((3, 1));
        for i in 0..3 {
            a[[i, 0]] = p[i];
        }
        for j in 0..3 {
            b[[j, 0]] = q[j];
        }
        let x = LsotVariables::new(a, b, SparseMat::zeros(3, 3)).unwrap();
        let y = Multipliers::zeros(3, 3);
        let mut engine = Engine::new(
            &zero_cost,
            &p,
            &q,
            &y,
            1.0,
            10.0,
            0.0,
            Mode::Lsot,
            GradientPath::Factored,
            x.clone(),
            &x,
        );
        let out = run_bcd(&mut engine, 1e-8, 100, 0, 0, 0, None);
        assert_eq!(out.iterations, 0);
        assert!(out.stationarity <= 1e-8);
    }

    #[test]
    fn descent_and_box_invariance_along_a_run() {
        let inst = gen_random_dense_instance(5, 6, 21).unwrap();
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let y = Multipliers::zeros(5, 6);
        let beta = 2.0;
        let sm = smoothness_constant(&y, beta, &inst.cost, &p, &q, 2);
        let start = crate::solver::default_init(&p, &q, 2);
        let mut engine = Engine::new(
            &inst.cost,
            &p,
            &q,
            &y,
            beta,
            sm.l,
            1e-3,
            Mode::Lsot,
            GradientPath::Factored,
            start.clone(),
            &start,
        );
        let mut values = vec![engine.g_plus_h()];
        let mut cb = |v: f64| values.push(v);
        let out = run_bcd(&mut engine, 1e-6, 400, 3, 0, 0, Some(&mut cb));
        assert!(out.iterations > 0);
        for w in values.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        engine.variables().check_box().unwrap();
    }

    #[test]
    fn factored_and_dense_iterates_agree() {
        let inst = crate::instance::gen_points_instance(8, 7, 2, 13).unwrap();
        let dense_cost = CostMatrix::Dense(inst.cost.materialize());
        let p = inst.p.weights().clone();
        let q = inst.q.weights().clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let y = Multipliers {
            y_p: Array1::from_shape_fn(8, |_| {
                rand::Rng::random_range(&mut rng, -0.5..0.5)
            }),
            y_q: Array1::from_shape_fn(7, |_| {
                rand::Rng::random_range(&mut rng, -0.5..0.5)
            }),
        };
        let beta = 2.0;
        let sm = smoothness_constant(&y, beta, &inst.cost, &p, &q, 3);
        let start = crate::solver::default_init(&p, &q, 3);
        let lambda = 1e-3;
        let mut fac = Engine::new(
            &inst.cost,
            &p,
            &q,
            &y,
            beta,
            sm.l,
            lambda,
            Mode::Lsot,
            GradientPath::Factored,
            start.clone(),
            &start,
        );
        let mut den = Engine::new(
            &dense_cost,
            &p,
            &q,
            &y,
            beta,
            sm.l,
            lambda,
            Mode::Lsot,
            GradientPath::Dense,
            start.clone(),
            &start,
        );
        for tau in 0..50u64 {
            let block = choose_block(9, 0, 0, tau, false);
            fac.step(block);
            den.step(block);
            let gap = fac.variables().sup_distance(&den.variables());
            assert!(gap <= 1e-10, "iterate gap {gap} at step {tau}");
            let sf = fac.stationarity();
            let sd = den.stationarity();
            assert!(
                (sf - sd).abs() <= 1e-8 * (1.0 + sd),
                "stationarity gap at step {tau}: {sf} vs {sd}"
            );
        }
    }

    #[test]
    fn tiny_problem_matches_grid_search() {
        // 1×1 with r = 1: three scalars; BCD must land near the grid optimum
        let p = ndarray::arr1(&[1.0]);
        let q = ndarray::arr1(&[1.0]);
        let cost = CostMatrix::dense(ndarray::arr2(&[[0.7]])).unwrap();
        let y = Multipliers {
            y_p: ndarray::arr1(&[0.2]),
            y_q: ndarray::arr1(&[-0.1]),
        };
        let beta = 4.0;
        let lambda = 0.05;
        let sm = smoothness_constant(&y, beta, &cost, &p, &q, 1);
        let start = LsotVariables::zeros(1, 1, 1);
        let mut engine = Engine::new(
            &cost,
            &p,
            &q,
            &y,
            beta,
            sm.l,
            lambda,
            Mode::Lsot,
            GradientPath::Factored,
            start.clone(),
            &start,
        );
        let out = run_bcd(&mut engine, 1e-9, 200_000, 1, 0, 0, None);
        assert!(!out.hit_cap, "stationarity {}", out.stationarity);
        let best = engine.variables();

        // brute-force the strongly convex G over a fine grid
        let g_value = |a: f64, b: f64, s: f64| {
            let x = LsotVariables::new(
                ndarray::arr2(&[[a]]),
                ndarray::arr2(&[[b]]),
                if s == 0.0 {
                    SparseMat::zeros(1, 1)
                } else {
                    SparseMat::from_triples(1, 1, vec![(0, 0, s)])
                },
            )
            .unwrap();
            let prox = x.distance(&start);
            crate::solver::grad::aug_lagrangian(&x, &y, beta, &cost, &p, &q)
                + sm.l * prox * prox
                + lambda * s.abs()
        };
        let steps = 60;
        let mut best_grid = f64::INFINITY;
        let mut arg = (0.0, 0.0, 0.0);
        for ia in 0..=steps {
            for ib in 0..=steps {
                for is in 0..=steps {
                    let (a, b, s) = (
                        ia as f64 / steps as f64,
                        ib as f64 / steps as f64,
                        is as f64 / steps as f64,
                    );
                    let v = g_value(a, b, s);
                    if v < best_grid {
                        best_grid = v;
                        arg = (a, b, s);
                    }
                }
            }
        }
        // refine twice around the winner; final resolution ~2e-5
        let refine = 40usize;
        let mut width = 1.0 / steps as f64;
        let mut best_ref = best_grid;
        let mut arg_ref = arg;
        for _stage in 0..2 {
            let center = arg_ref;
            for ia in 0..=refine {
                for ib in 0..=refine {
                    for is in 0..=refine {
                        let at = |c: f64, idx: usize| {
                            (c - width + 2.0 * width * idx as f64 / refine as f64)
                                .clamp(0.0, 1.0)
                        };
                        let (a, b, s) = (at(center.0, ia), at(center.1, ib), at(center.2, is));
                        let v = g_value(a, b, s);
                        if v < best_ref {
                            best_ref = v;
                            arg_ref = (a, b, s);
                        }
                    }
                }
            }
            width = 2.0 * width / refine as f64;
        }
        let got = (best.a[[0, 0]], best.b[[0, 0]], best.s.get(0, 0));
        assert!(
            (got.0 - arg_ref.0).abs() <= 1e-4
                && (got.1 - arg_ref.1).abs() <= 1e-4
                && (got.2 - arg_ref.2).abs() <= 1e-4,
            "bcd {got:?} vs grid {arg_ref:?}"
        );
        assert!(g_value(got.0, got.1, got.2) <= best_ref + 1e-8);
    }
}
