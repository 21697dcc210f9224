use lsot_core::bounds::*;
use lsot_core::instance::gen_planted_instance;
use std::time::Instant;

fn main() {
    // criterion-9 shaped probe: planted instances, grid over (r, rho)
    for seed in 0..4u64 {
        let inst = gen_planted_instance(6, 6, 2, 3, 900 + seed).unwrap();
        let parts = inst.planted.as_ref().unwrap();
        eprintln!("seed {seed}: r*={} rho*={}", parts.r_star(), parts.rho_star());
        for r in 1..=3usize {
            for rho in [0usize, 1, 3, 4] {
                let t0 = Instant::now();
                match measure_bound_gap(&inst, r, rho, 1e-2, seed) {
                    Ok(m) => eprintln!(
                        "  r={r} rho={rho}: rhs={:.3e} gap={:.3e} conv={} informative={} ({:?})",
                        m.bound.rhs, m.gap, m.solver_converged, m.bound.informative, t0.elapsed()
                    ),
                    Err(e) => eprintln!("  r={r} rho={rho}: ERR {e}"),
                }
            }
        }
    }
}
