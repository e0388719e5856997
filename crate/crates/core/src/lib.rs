//! Portfolio rebalancing with factor risk, spread costs and power-law market
//! impact, solved by a first-order primal-dual splitting method.

pub mod bench;
pub mod error;
pub mod gen;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod prox;
pub mod risk;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{
    Decision, ExposureConstraints, FactorRiskModel, FeasibilityReport, MultiPeriodData, MultiPeriodProblem, Problem,
    SinglePeriodData, SinglePeriodProblem,
};
pub use solver::{solve, solve_multi, solve_single, SolveOutcome, SolveStatus, SolverConfig};
