//! Offline benchmark: the best fixed feasible occupancy measure in hindsight,
//! a brute-force cross-check, and the regret/violation metrics.

mod hindsight;
mod metrics;
pub mod simplex;

pub use hindsight::{
    brute_force_best_fixed, solve_best_fixed, HindsightProblem, HindsightSolution, BRUTE_FORCE_LIMIT, CERTIFICATE_TOL,
};
pub use metrics::{regret, violation, MetricsAccumulator};
