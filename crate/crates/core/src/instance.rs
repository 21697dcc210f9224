//! Problem instances and seeded generators with known optima.

use ndarray::Array2;
use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::cost::{sqeuclidean_factored_cost, CostMatrix};
use crate::error::{Error, Result};
use crate::measure::{validate_measure, DiscreteMeasure};
use crate::plan::TransportPlan;
use crate::sparse::SparseMat;

/// Planted ground truth attached to generated instances: the optimal plan
/// `T* = L* + S*` with a nonnegative factor certificate for `L*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedParts {
    /// The planted optimal plan `T*`.
    pub plan: TransportPlan,
    /// `L* = factor_a · factor_bᵀ`, columns are the rank-one summands.
    pub factor_a: Array2<f64>,
    pub factor_b: Array2<f64>,
    /// `S*` with its exact support.
    pub sparse: SparseMat,
}

impl PlantedParts {
    pub fn low_rank(&self) -> Array2<f64> {
        self.factor_a.dot(&self.factor_b.t())
    }

    pub fn r_star(&self) -> usize {
        self.factor_a.ncols()
    }

    pub fn rho_star(&self) -> usize {
        self.sparse.nnz()
    }
}

/// A fully specified OT problem plus free-form provenance metadata.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub p: DiscreteMeasure,
    pub q: DiscreteMeasure,
    pub cost: CostMatrix,
    pub seed: Option<u64>,
    pub planted: Option<PlantedParts>,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        p: DiscreteMeasure,
        q: DiscreteMeasure,
        cost: CostMatrix,
    ) -> Result<Self> {
        if cost.nrows() != p.len() || cost.ncols() != q.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "cost is {:?} for measures of size {} and {}",
                    cost.shape(),
                    p.len(),
                    q.len()
                ),
            });
        }
        Ok(Instance {
            name: name.into(),
            p,
            q,
            cost,
            seed: None,
            planted: None,
        })
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }
}

/// Instance whose unique optimal plan is `(1/n) P` for a seeded random
/// permutation matrix `P`: the cost is 0 on the permutation support and 1
/// elsewhere, so the optimal value is 0.
pub fn gen_permutation_instance(n: usize, seed: u64) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidParams("permutation instance needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut c = Array2::ones((n, n));
    for (i, &j) in perm.iter().enumerate() {
        c[[i, j]] = 0.0;
    }
    let uniform = vec![1.0 / n as f64; n];
    let mut inst = Instance::new(
        format!("permutation-n{n}-seed{seed}"),
        validate_measure(&uniform)?,
        validate_measure(&uniform)?,
        CostMatrix::dense(c)?,
    )?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// Instance with a planted decomposition `T* = L* + S*`.
///
/// `L*` is block-diagonal with `r_star` positive rank-one blocks, so its
/// nonnegative rank is exactly `r_star`; `S*` has exactly `rho_star`
/// nonzeros, placed off the blocks when there is room so that every positive
/// entry of `T*` belongs to exactly one of the two parts. The cost is 0 on
/// the support of `T*` and positive elsewhere, which makes `T*` optimal with
/// value 0.
pub fn gen_planted_instance(
    m: usize,
    n: usize,
    r_star: usize,
    rho_star: usize,
    seed: u64,
) -> Result<Instance> {
    if r_star < 1 || r_star > m.min(n) {
        return Err(Error::InvalidParams(format!(
            "r_star must lie in 1..=min(m, n); got {r_star} for {m}x{n}"
        )));
    }
    if rho_star > m * n {
        return Err(Error::InfeasibleSparsity {
            rho: rho_star,
            cells: m * n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // contiguous row/col blocks, one rank-one summand per block
    let row_block = block_assignment(m, r_star);
    let col_block = block_assignment(n, r_star);
    let mut factor_a = Array2::zeros((m, r_star));
    for i in 0..m {
        factor_a[[i, row_block[i]]] = rng.random_range(0.5..1.0);
    }
    let mut factor_b = Array2::zeros((n, r_star));
    for j in 0..n {
        factor_b[[j, col_block[j]]] = rng.random_range(0.5..1.0);
    }
    let low_rank = factor_a.dot(&factor_b.t());

    // sparse part: off-block cells first, so T* entries split cleanly
    let mut off_block: Vec<(usize, usize)> = Vec::new();
    let mut on_block: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if row_block[i] == col_block[j] {
                on_block.push((i, j));
            } else {
                off_block.push((i, j));
            }
        }
    }
    off_block.shuffle(&mut rng);
    on_block.shuffle(&mut rng);
    let cells: Vec<(usize, usize)> = off_block
        .into_iter()
        .chain(on_block)
        .take(rho_star)
        .collect();
    let triples: Vec<(usize, usize, f64)> = cells
        .iter()
        .map(|&(i, j)| (i, j, rng.random_range(0.5..1.0)))
        .collect();

    let mut total = low_rank.sum();
    for &(_, _, v) in &triples {
        total += v;
    }
    let factor_a = factor_a / total;
    let sparse = SparseMat::from_triples(
        m,
        n,
        triples.into_iter().map(|(i, j, v)| (i, j, v / total)),
    );
    let low_rank = factor_a.dot(&factor_b.t());
    let plan_entries = &low_rank + &sparse.to_dense();
    let plan = TransportPlan::new(plan_entries.clone())?;

    let p = validate_measure(plan.row_sums().as_slice().unwrap())?;
    let q = validate_measure(plan.col_sums().as_slice().unwrap())?;

    let mut c = Array2::zeros((m, n));
    for ((i, j), &t) in plan_entries.indexed_iter() {
        c[[i, j]] = if t > 0.0 { 0.0 } else { rng.random_range(0.5..1.5) };
    }

    let mut inst = Instance::new(
        format!("planted-{m}x{n}-r{r_star}-rho{rho_star}-seed{seed}"),
        p,
        q,
        CostMatrix::dense(c)?,
    )?;
    inst.seed = Some(seed);
    inst.planted = Some(PlantedParts {
        plan,
        factor_a,
        factor_b,
        sparse,
    });
    Ok(inst)
}

fn block_assignment(len: usize, blocks: usize) -> Vec<usize> {
    (0..len).map(|i| i * blocks / len).collect()
}

/// Uniform measures on seeded point clouds in `R^d` with a factored
/// squared-Euclidean cost (inner dimension `d + 2`).
pub fn gen_points_instance(m: usize, n: usize, d: usize, seed: u64) -> Result<Instance> {
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::InvalidParams("points instance needs m, n, d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let cost = sqeuclidean_factored_cost(&x, &y)?;
    let p = validate_measure(&vec![1.0 / m as f64; m])?.with_support(x)?;
    let q = validate_measure(&vec![1.0 / n as f64; n])?.with_support(y)?;
    let mut inst = Instance::new(format!("points-{m}x{n}-d{d}-seed{seed}"), p, q, cost)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// Dense random instance: uniform costs in `[0, 1)`, random positive
/// measures. Handy for oracle comparisons.
pub fn gen_random_dense_instance(m: usize, n: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..1.0));
    let mut p: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    p.iter_mut().for_each(|v| *v /= sp);
    q.iter_mut().for_each(|v| *v /= sq);
    let mut inst = Instance::new(
        format!("random-{m}x{n}-seed{seed}"),
        validate_measure(&p)?,
        validate_measure(&q)?,
        CostMatrix::dense(c)?,
    )?;
    inst.seed = Some(seed);
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::transport_cost;

    #[test]
    fn permutation_n1() {
        let inst = gen_permutation_instance(1, 0).unwrap();
        assert_eq!(inst.cost.entry(0, 0), 0.0);
    }

    #[test]
    fn permutation_cost_is_zero_one() {
        let inst = gen_permutation_instance(4, 9).unwrap();
        let c = inst.cost.materialize();
        let zeros = c.iter().filter(|&&v| v == 0.0).count();
        let ones = c.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(zeros, 4);
        assert_eq!(ones, 12);
        // one zero per row and per column
        for i in 0..4 {
            assert_eq!(c.row(i).iter().filter(|&&v| v == 0.0).count(), 1);
            assert_eq!(c.column(i).iter().filter(|&&v| v == 0.0).count(), 1);
        }
    }

    #[test]
    fn planted_product_coupling_case() {
        // r*=1, rho*=0 gives the product coupling p·qᵀ
        let inst = gen_planted_instance(3, 4, 1, 0, 2).unwrap();
        let parts = inst.planted.as_ref().unwrap();
        let t = parts.plan.entries();
        for i in 0..3 {
            for j in 0..4 {
                let expect = inst.p.weights()[i] * inst.q.weights()[j];
                assert!((t[[i, j]] - expect).abs() <= 1e-12);
            }
        }
        assert_eq!(parts.rho_star(), 0);
    }

    #[test]
    fn planted_counts_and_certificate() {
        let inst = gen_planted_instance(4, 4, 2, 3, 1).unwrap();
        let parts = inst.planted.as_ref().unwrap();
        assert_eq!(parts.rho_star(), 3);
        assert_eq!(parts.r_star(), 2);
        // plan is optimal with value 0
        let v = transport_cost(&inst.cost, &parts.plan).unwrap();
        assert_eq!(v, 0.0);
        // factor certificate reproduces L* entrywise
        let l = parts.low_rank();
        let t = parts.plan.entries();
        let s = parts.sparse.to_dense();
        for ((i, j), &lv) in l.indexed_iter() {
            assert!((lv + s[[i, j]] - t[[i, j]]).abs() <= 1e-12);
        }
        // marginals validate
        assert!(validate_measure(inst.p.weights().as_slice().unwrap()).is_ok());
        assert!(validate_measure(inst.q.weights().as_slice().unwrap()).is_ok());
    }

    #[test]
    fn planted_rejects_oversized_sparsity() {
        assert!(matches!(
            gen_planted_instance(2, 2, 1, 5, 0),
            Err(Error::InfeasibleSparsity { .. })
        ));
    }

    #[test]
    fn points_inner_dim() {
        let inst = gen_points_instance(8, 8, 2, 3).unwrap();
        match &inst.cost {
            CostMatrix::Factored { e, .. } => assert_eq!(e.ncols(), 4),
            _ => panic!("expected factored cost"),
        }
    }
}
