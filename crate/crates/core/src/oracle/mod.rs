//! Independent verification of solver output.

mod certificate;
mod gradient;
mod grid;
mod projection;
mod verify;

pub use certificate::{
    directional_check, OptimalityCertificate, CANDIDATE_FEASIBILITY_TOL, CERTIFICATE_SEED, DEFAULT_DIRECTIONS,
    DEFAULT_STEPS,
};
pub use gradient::{gradient_check, grid_prox_1d, prox_minimizer_bracketed, prox_optimality_gap};
pub use grid::{grid_solve, GridSolution, GRID_FEASIBILITY_TOL, MAX_GRID_DIM, MIN_GRID_RESOLUTION};
pub use projection::{flat_violation, project_feasible};
pub use verify::{verify_solution, GridComparison, VerificationReport, VerifyConfig};
