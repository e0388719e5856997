//! Combined verification of a candidate: feasibility, the directional
//! certificate and, at tiny dimension, a grid comparison.

use serde::{Deserialize, Serialize};

use super::certificate::{directional_check, OptimalityCertificate, DEFAULT_DIRECTIONS, DEFAULT_STEPS};
use super::grid::{grid_solve, MAX_GRID_DIM};
use crate::error::{Error, Result};
use crate::model::{Decision, FeasibilityReport, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub feasibility_tolerance: f64,
    pub certificate_tolerance: f64,
    pub directions: usize,
    pub steps: Vec<f64>,
    pub grid_resolution: usize,
    /// Largest GMV-normalized amount by which the grid may beat the candidate.
    pub grid_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            feasibility_tolerance: 1e-6,
            certificate_tolerance: 1e-4,
            directions: DEFAULT_DIRECTIONS,
            steps: DEFAULT_STEPS.to_vec(),
            grid_resolution: 2001,
            grid_tolerance: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub resolution: usize,
    /// GMV-normalized objectives.
    pub grid_objective: f64,
    pub candidate_objective: f64,
    pub error_bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: String,
    pub feasibility: FeasibilityReport,
    /// Absent when the candidate is infeasible.
    pub certificate: Option<OptimalityCertificate>,
    /// Present when the decision dimension admits the grid oracle.
    pub grid: Option<GridComparison>,
    /// Names of failed checks: `feasibility`, `certificate`, `grid`.
    pub failed_checks: Vec<String>,
    pub passed: bool,
}

pub fn verify_solution(problem: &Problem, decision: &Decision, config: &VerifyConfig) -> Result<VerificationReport> {
    if !(config.grid_tolerance >= 0.0) {
        return Err(Error::Invalid("grid tolerance must be nonnegative".into()));
    }
    let feasibility = problem.check_feasibility(decision, config.feasibility_tolerance)?;
    let mut failed = Vec::new();
    let certificate = if feasibility.feasible {
        let c = directional_check(
            problem,
            decision,
            config.directions,
            &config.steps,
            config.certificate_tolerance,
        )?;
        if !c.passed {
            failed.push("certificate".to_string());
        }
        Some(c)
    } else {
        failed.push("feasibility".to_string());
        None
    };
    let grid = if problem.decision_dim() <= MAX_GRID_DIM {
        let g = grid_solve(problem, config.grid_resolution)?;
        let candidate_objective = problem.normalized_objective(decision)?;
        let passed = g.objective - candidate_objective <= config.grid_tolerance;
        if !passed {
            failed.push("grid".to_string());
        }
        Some(GridComparison {
            resolution: config.grid_resolution,
            grid_objective: g.objective,
            candidate_objective,
            error_bound: g.error_bound,
            passed,
        })
    } else {
        None
    };
    Ok(VerificationReport {
        kind: problem.kind().to_string(),
        feasibility,
        certificate,
        grid,
        passed: failed.is_empty(),
        failed_checks: failed,
    })
}
