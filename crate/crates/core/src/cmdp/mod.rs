//! Layered loop-free MDPs and the occupancy-measure algebra.

mod layout;
mod ops;
mod tensors;

pub use layout::{Edge, MdpLayout};
pub use ops::{
    conditional_residual, inner_product, mix_with_uniform, recover_policy, unnormalized_kl,
    validate_occupancy, validate_with_tolerance, ValidationReport, Violation, POLYTOPE_TOL,
};
pub use tensors::{OccupancyMeasure, Policy, StageFunction, TransitionModel};
