//! Data parallelism over independent work items.
//!
//! Batch layers (verification suites, bound sweeps, benchmark grids) fan out
//! across items with rayon when the `parallel` feature is on, and fall back
//! to plain iteration otherwise. Results come back in input order either
//! way, so outputs are identical across the two builds; a single solve is
//! always sequential.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn maybe_par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn maybe_par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Run `f` over items with at most `threads` workers (used by the benchmark
/// runner, where `LSOT_THREADS` bounds fan-out). `threads == 1` or a
/// sequential build runs in place.
#[cfg(feature = "parallel")]
pub fn bounded_par_map<T, U, F>(items: Vec<T>, threads: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    if threads <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool");
    pool.install(|| items.into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn bounded_par_map<T, U, F>(items: Vec<T>, _threads: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// True when this build fans batch work out across threads.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
