//! Dephasing, registration dynamics and final-state analysis.

pub mod dephasing;
pub mod diagnostics;
pub mod outcome;
pub mod registration;

pub use dephasing::{dephasing_joint_asymptote, dephasing_joint_numeric, dephasing_single, dephasing_time};
pub use diagnostics::{anisotropy_diagnostics, axis_registration, central_mass, down_branch_slope};
pub use outcome::{fit_response, quadrant_weights, response_fit, OutcomeWeights, QuadrantWeights, ResponseFit};
pub use registration::{
    evolve, evolve_observed, full_rhs, registration_rhs, registration_threshold, FullField, Integrator, RateTable,
    Snapshot, SolverConfig, Trajectory,
};
