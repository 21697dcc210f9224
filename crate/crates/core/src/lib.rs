//! Optimal-transport distances with low-rank-plus-sparse transport plans.
//!
//! The library computes OT distances between discrete measures three ways:
//!
//! * [`exact`] — a transportation-problem network simplex (ground truth) and
//!   an exhaustive tiny-instance verifier,
//! * [`entropic`] — a Sinkhorn baseline, the KL projection onto the
//!   transport polytope, and feasibility rounding,
//! * [`solver`] — the main event: the plan is restricted to `A·Bᵀ + S` with
//!   box-constrained factors `A`, `B` and a sparse matrix `S`, solved by an
//!   inexact augmented Lagrangian method whose subproblems are handled by
//!   randomized proximal block coordinate descent.
//!
//! [`bounds`] evaluates the a-priori approximation-error bounds for the
//! low-rank-plus-sparse restriction on instances with known decompositions,
//! and [`verify`] packages the numerical property suites (gradient checks,
//! convexity sandwiches, projection identities, oracle agreement) that both
//! the test suite and the CLI run.

pub mod bench;
pub mod bounds;
pub mod cost;
pub mod entropic;
pub mod error;
pub mod exact;
pub mod instance;
pub mod io;
pub mod measure;
pub mod par;
pub mod plan;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use cost::{sqeuclidean_factored_cost, transport_cost, CostMatrix};
pub use error::{Error, Result};
pub use exact::{oracle_tiny, solve_exact, ExactSolution};
pub use instance::{
    gen_permutation_instance, gen_planted_instance, gen_points_instance, Instance, PlantedParts,
};
pub use measure::{validate_measure, DiscreteMeasure};
pub use plan::{marginal_residuals, TransportPlan};
pub use solver::{ialm, AlmConfig, GradientPath, LsotVariables, Mode, Multipliers, SolveReport};
pub use sparse::SparseMat;
