//! Ground-truth OT: a transportation-problem network simplex and an
//! exhaustive verifier that enumerates every basis of tiny instances.

use ndarray::Array2;

use crate::cost::cost_scale;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::plan::TransportPlan;

/// `m·n` guard for the simplex solver.
pub const SIZE_GUARD: usize = 1_000_000;

/// `m+n` guard for the enumeration oracle.
pub const TINY_GUARD: usize = 9;

/// An optimal vertex of the transportation polytope.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub value: f64,
    /// Strictly positive entries; at most `m + n − 1` for a vertex.
    pub support_size: usize,
    /// Simplex pivots performed.
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct Arc {
    i: usize,
    j: usize,
    flow: f64,
}

/// Solve the unregularized problem exactly with a network simplex.
///
/// Entering arcs are chosen by Bland's rule (lowest row-major index with
/// negative reduced cost) and ties in the ratio test break to the lowest
/// index, so runs are deterministic and cycling is impossible. Supplies are
/// perturbed by distinct tiny amounts to keep bases nondegenerate, and flows
/// are recomputed from the unperturbed data on the final tree.
pub fn solve_exact(inst: &Instance) -> Result<ExactSolution> {
    let (m, n) = (inst.m(), inst.n());
    if m * n > SIZE_GUARD {
        return Err(Error::SizeGuardExceeded {
            size: m * n,
            guard: SIZE_GUARD,
        });
    }
    let cost = inst.cost.materialize();
    let tol = 1e-11 * cost_scale(&inst.cost);

    // graded perturbation so no two subset sums of supplies collide
    let eps0 = 1e-13 / m as f64;
    let mut supply: Vec<f64> = inst
        .p
        .weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| w + (i + 1) as f64 * eps0)
        .collect();
    let mut demand: Vec<f64> = inst.q.weights().to_vec();
    let added: f64 = (1..=m).map(|i| i as f64 * eps0).sum();
    demand[n - 1] += added;
    let mut basis = northwest_corner(&supply, &demand);

    let mut in_basis = vec![false; m * n];
    for a in &basis {
        in_basis[a.i * n + a.j] = true;
    }

    let nodes = m + n;
    let mut iterations = 0usize;
    let pivot_cap = 1000 * (m + n) * (m + n) + 10_000;
    loop {
        // duals from the tree: u[0] = 0, C_ij = u_i + v_j on basic arcs
        let adj = adjacency(&basis, m, nodes);
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut stack = vec![0usize];
        let mut seen = vec![false; nodes];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &ai in &adj[node] {
                let a = basis[ai];
                let other = if node == a.i { m + a.j } else { a.i };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                if other >= m {
                    v[other - m] = cost[[a.i, a.j]] - u[a.i];
                } else {
                    u[other] = cost[[a.i, a.j]] - v[a.j];
                }
                stack.push(other);
            }
        }

        // Bland: first arc in row-major order with negative reduced cost
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if !in_basis[i * n + j] && cost[[i, j]] - u[i] - v[j] < -tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // unique tree path from source ei to sink ej closes the cycle
        let path = tree_path(&basis, &adj, m, ei, m + ej);
        // entering arc takes +θ; signs alternate along the path walked
        // back from the sink endpoint
        let mut minus_arcs: Vec<usize> = Vec::new();
        let mut plus_arcs: Vec<usize> = Vec::new();
        for (k, &ai) in path.iter().enumerate() {
            if k % 2 == 0 {
                minus_arcs.push(ai);
            } else {
                plus_arcs.push(ai);
            }
        }
        let theta = minus_arcs
            .iter()
            .map(|&ai| basis[ai].flow)
            .fold(f64::INFINITY, f64::min);
        // lowest row-major index among arcs achieving the minimum
        let mut leave_pos = usize::MAX;
        let mut leave_key = usize::MAX;
        for &ai in &minus_arcs {
            let a = basis[ai];
            if a.flow <= theta {
                let key = a.i * n + a.j;
                if key < leave_key {
                    leave_key = key;
                    leave_pos = ai;
                }
            }
        }

        for &ai in &plus_arcs {
            basis[ai].flow += theta;
        }
        for &ai in &minus_arcs {
            basis[ai].flow -= theta;
        }
        let leaving = basis[leave_pos];
        in_basis[leaving.i * n + leaving.j] = false;
        in_basis[ei * n + ej] = true;
        basis[leave_pos] = Arc {
            i: ei,
            j: ej,
            flow: theta,
        };

        iterations += 1;
        assert!(
            iterations <= pivot_cap,
            "network simplex exceeded its pivot cap; this is a bug"
        );
    }

    // recompute flows on the optimal tree from the unperturbed marginals
    supply.copy_from_slice(inst.p.weights().as_slice().unwrap());
    demand.copy_from_slice(inst.q.weights().as_slice().unwrap());
    let tree: Vec<(usize, usize)> = basis.iter().map(|a| (a.i, a.j)).collect();
    let flows = tree_flows(&tree, &supply, &demand)
        .expect("optimal basis must be a spanning tree");

    let mut entries = Array2::zeros((m, n));
    let mut value = 0.0;
    for (&(i, j), &f) in tree.iter().zip(&flows) {
        debug_assert!(f >= -1e-9, "basic flow {f} below feasibility slack");
        let f = f.max(0.0);
        entries[[i, j]] = f;
        value += cost[[i, j]] * f;
    }
    let plan = TransportPlan::new(entries)?;
    let support_size = plan.support_size();
    Ok(ExactSolution {
        plan,
        value,
        support_size,
        iterations,
    })
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Vec<Arc> {
    let (m, n) = (supply.len(), demand.len());
    let mut srem = supply.to_vec();
    let mut drem = demand.to_vec();
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0usize, 0usize);
    for _ in 0..(m + n - 1) {
        let f = srem[i].min(drem[j]).max(0.0);
        basis.push(Arc { i, j, flow: f });
        srem[i] -= f;
        drem[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (srem[i] <= drem[j] && i < m - 1) {
            i += 1;
        } else {
            j += 1;
        }
    }
    basis
}

fn adjacency(basis: &[Arc], m: usize, nodes: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); nodes];
    for (ai, a) in basis.iter().enumerate() {
        adj[a.i].push(ai);
        adj[m + a.j].push(ai);
    }
    adj
}

/// Arcs along the unique tree path from `from` to `to`, ordered starting at
/// `to`'s end of the path.
fn tree_path(
    basis: &[Arc],
    adj: &[Vec<usize>],
    m: usize,
    from: usize,
    to: usize,
) -> Vec<usize> {
    let nodes = adj.len();
    let mut parent_arc = vec![usize::MAX; nodes];
    let mut parent_node = vec![usize::MAX; nodes];
    let mut seen = vec![false; nodes];
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(node) = stack.pop() {
        if node == to {
            break;
        }
        for &ai in &adj[node] {
            let a = basis[ai];
            let other = if node == a.i { m + a.j } else { a.i };
            if !seen[other] {
                seen[other] = true;
                parent_arc[other] = ai;
                parent_node[other] = node;
                stack.push(other);
            }
        }
    }
    assert!(seen[to], "basis is not a spanning tree; this is a bug");
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        path.push(parent_arc[node]);
        node = parent_node[node];
    }
    path
}

/// Solve the flows a spanning tree induces by stripping leaves. Returns
/// `None` when the arcs do not form a spanning tree.
fn tree_flows(arcs: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (supply.len(), demand.len());
    let nodes = m + n;
    if arcs.len() != nodes - 1 {
        return None;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (ai, &(i, j)) in arcs.iter().enumerate() {
        adj[i].push(ai);
        adj[m + j].push(ai);
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    if degree.iter().any(|&d| d == 0) {
        return None;
    }
    let mut balance: Vec<f64> = supply
        .iter()
        .copied()
        .chain(demand.iter().map(|&d| -d))
        .collect();
    let mut assigned = vec![false; arcs.len()];
    let mut flows = vec![0.0; arcs.len()];
    let mut leaves: Vec<usize> = (0..nodes).filter(|&x| degree[x] == 1).collect();
    let mut done = 0usize;
    while let Some(node) = leaves.pop() {
        if degree[node] != 1 {
            continue;
        }
        let Some(&ai) = adj[node].iter().find(|&&ai| !assigned[ai]) else {
            continue;
        };
        let (i, j) = arcs[ai];
        let other = if node == i { m + j } else { i };
        // flow out of a source leaf, into a sink leaf
        let f = if node < m { balance[node] } else { -balance[node] };
        flows[ai] = f;
        assigned[ai] = true;
        done += 1;
        balance[node] = 0.0;
        if other < m {
            balance[other] -= f;
        } else {
            balance[other] += f;
        }
        degree[node] -= 1;
        degree[other] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    if done != arcs.len() {
        return None; // disconnected (cycle + separate component)
    }
    Some(flows)
}

/// Brute-force optimum by enumerating every spanning tree of the complete
/// bipartite graph, solving the flows each tree induces, and keeping the
/// best nonnegative one. Exact up to the floating-point tree solves.
pub fn oracle_tiny(inst: &Instance) -> Result<f64> {
    let (m, n) = (inst.m(), inst.n());
    if m + n > TINY_GUARD {
        return Err(Error::SizeGuardExceeded {
            size: m + n,
            guard: TINY_GUARD,
        });
    }
    let cost = inst.cost.materialize();
    let supply = inst.p.weights().to_vec();
    let demand = inst.q.weights().to_vec();
    let arcs_all: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let arcs: Vec<(usize, usize)> = combo.iter().map(|&x| arcs_all[x]).collect();
        if spans(&arcs, m, n) {
            if let Some(flows) = tree_flows(&arcs, &supply, &demand) {
                if flows.iter().all(|&f| f >= -1e-12) {
                    let v: f64 = arcs
                        .iter()
                        .zip(&flows)
                        .map(|(&(i, j), &f)| cost[[i, j]] * f.max(0.0))
                        .sum();
                    best = best.min(v);
                }
            }
        }
        if !next_combination(&mut combo, arcs_all.len()) {
            break;
        }
    }
    debug_assert!(best.is_finite(), "balanced instances always have a basis");
    Ok(best)
}

fn spans(arcs: &[(usize, usize)], m: usize, n: usize) -> bool {
    let nodes = m + n;
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    let mut merged = 0;
    for &(i, j) in arcs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
        if a == b {
            return false; // cycle
        }
        parent[a] = b;
        merged += 1;
    }
    merged == nodes - 1
}

fn next_combination(combo: &mut [usize], total: usize) -> bool {
    let k = combo.len();
    let mut idx = k;
    while idx > 0 {
        idx -= 1;
        if combo[idx] < total - (k - idx) {
            combo[idx] += 1;
            for later in idx + 1..k {
                combo[later] = combo[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{transport_cost, CostMatrix};
    use crate::instance::{gen_random_dense_instance, Instance};
    use crate::measure::validate_measure;
    use ndarray::array;

    fn tiny_instance(c: Array2<f64>, p: &[f64], q: &[f64]) -> Instance {
        Instance::new(
            "t",
            validate_measure(p).unwrap(),
            validate_measure(q).unwrap(),
            CostMatrix::dense(c).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn swap_free_two_by_two() {
        let inst = tiny_instance(array![[0.0, 1.0], [1.0, 0.0]], &[0.5, 0.5], &[0.5, 0.5]);
        let sol = solve_exact(&inst).unwrap();
        assert!(sol.value.abs() <= 1e-12);
        assert!((sol.plan.entries()[[0, 0]] - 0.5).abs() <= 1e-12);
        assert!((sol.plan.entries()[[1, 1]] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn antidiagonal_two_by_two() {
        let inst = tiny_instance(array![[1.0, 0.0], [0.0, 1.0]], &[0.5, 0.5], &[0.5, 0.5]);
        let sol = solve_exact(&inst).unwrap();
        assert!(sol.value.abs() <= 1e-12);
        assert!((sol.plan.entries()[[0, 1]] - 0.5).abs() <= 1e-12);
        assert!((sol.plan.entries()[[1, 0]] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn oracle_tiny_one_by_one() {
        let inst = tiny_instance(array![[3.25]], &[1.0], &[1.0]);
        assert_eq!(oracle_tiny(&inst).unwrap(), 3.25);
    }

    #[test]
    fn oracle_tiny_asymmetric_marginals() {
        // bases of the 2x2: only {T11=.3, T21=.2, T22=.5} is feasible
        // besides the expensive antidiagonal one; minimum cost is 0.2
        let inst = tiny_instance(array![[0.0, 1.0], [1.0, 0.0]], &[0.3, 0.7], &[0.5, 0.5]);
        let v = oracle_tiny(&inst).unwrap();
        assert!((v - 0.2).abs() <= 1e-12, "got {v}");
        let sol = solve_exact(&inst).unwrap();
        assert!((sol.value - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn zero_diagonal_matched_measures() {
        let inst = tiny_instance(
            array![[0.0, 2.0, 3.0], [2.0, 0.0, 1.0], [0.5, 4.0, 0.0]],
            &[0.2, 0.3, 0.5],
            &[0.2, 0.3, 0.5],
        );
        assert!(oracle_tiny(&inst).unwrap().abs() <= 1e-15);
        assert!(solve_exact(&inst).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn simplex_agrees_with_enumeration() {
        for seed in 0..50u64 {
            let m = 2 + (seed % 3) as usize;
            let n = 2 + ((seed / 3) % 3) as usize;
            let inst = gen_random_dense_instance(m, n, 1000 + seed).unwrap();
            let exact = solve_exact(&inst).unwrap();
            let brute = oracle_tiny(&inst).unwrap();
            assert!(
                (exact.value - brute).abs() <= 1e-12 * (1.0 + brute.abs()),
                "seed {seed}: simplex {} vs enumeration {brute}",
                exact.value
            );
            assert!(exact.support_size <= m + n - 1);
            let err = crate::plan::marginal_error(&exact.plan, &inst.p, &inst.q);
            assert!(err <= 1e-10, "marginal error {err}");
        }
    }

    #[test]
    fn cost_scaling_scales_value_and_keeps_plan() {
        for seed in 0..5u64 {
            let inst = gen_random_dense_instance(4, 5, 77 + seed).unwrap();
            let base = solve_exact(&inst).unwrap();
            let lambda = 3.5;
            let scaled = Instance::new(
                "scaled",
                inst.p.clone(),
                inst.q.clone(),
                CostMatrix::dense(inst.cost.materialize() * lambda).unwrap(),
            )
            .unwrap();
            let sol = solve_exact(&scaled).unwrap();
            assert!((sol.value - lambda * base.value).abs() <= 1e-9);
            // the returned plan is feasible and re-priced under λC it costs λ·value
            let re = transport_cost(&scaled.cost, &sol.plan).unwrap();
            assert!((re - lambda * base.value).abs() <= 1e-9);
        }
    }

    #[test]
    fn lower_bound_against_feasible_plans() {
        let inst = gen_random_dense_instance(4, 4, 5).unwrap();
        let sol = solve_exact(&inst).unwrap();
        // product coupling is feasible; optimal value must not exceed it
        let mut prod = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                prod[[i, j]] = inst.p.weights()[i] * inst.q.weights()[j];
            }
        }
        let prod_cost =
            transport_cost(&inst.cost, &TransportPlan::new(prod).unwrap()).unwrap();
        assert!(sol.value <= prod_cost + 1e-9);
    }

    #[test]
    fn size_guards() {
        let inst = gen_random_dense_instance(4, 6, 0).unwrap();
        assert!(matches!(
            oracle_tiny(&inst),
            Err(Error::SizeGuardExceeded { .. })
        ));
    }
}
