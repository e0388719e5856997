//! Brute-force maximization over a uniform lattice on `[−1, 1]^dim`.
//!
//! Small lattices are enumerated exhaustively. Larger ones start from an
//! exhaustive coarse lattice and zoom in on the incumbent with a nested
//! lattice, staying on the fine grid; concavity of the objective over the
//! convex feasible set is what makes the local search sufficient.

use serde::{Deserialize, Serialize};

use super::projection::flat_violation;
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::model::{Decision, Problem};

pub const MAX_GRID_DIM: usize = 4;
pub const MIN_GRID_RESOLUTION: usize = 101;
/// Feasibility tolerance for grid points.
pub const GRID_FEASIBILITY_TOL: f64 = 1e-9;
/// Exhaustive enumeration up to this many lattice points.
const EXHAUSTIVE_LIMIT: u64 = 5_000_000;
/// Points per axis in the coarse pass and in each zoom window.
const ZOOM_POINTS: i64 = 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub decision: Decision,
    /// Normalized objective at the best grid point.
    pub objective: f64,
    pub spacing: f64,
    /// Lipschitz bound times half the cell diagonal.
    pub error_bound: f64,
    pub evaluated: u64,
    pub exhaustive: bool,
}

struct Lattice<'a> {
    problem: &'a Problem,
    dim: usize,
    resolution: i64,
    spacing: f64,
    evaluated: u64,
    point: Vec<f64>,
}

impl Lattice<'_> {
    fn coord(&self, index: i64) -> f64 {
        // Symmetric so that index (res−1)/2 maps to 0 exactly.
        let half = (self.resolution - 1) as f64 / 2.0;
        (index as f64 - half) / half
    }

    /// Normalized objective at a lattice index, or `None` when infeasible.
    fn value(&mut self, index: &[i64]) -> Result<Option<f64>> {
        let half = (self.resolution - 1) as f64 / 2.0;
        for (slot, &i) in self.point.iter_mut().zip(index) {
            *slot = (i as f64 - half) / half;
        }
        let n = self.problem.n();
        if self
            .point
            .chunks(n)
            .any(|w| w.iter().map(|v| v.abs()).sum::<f64>() > 1.0 + GRID_FEASIBILITY_TOL)
        {
            return Ok(None);
        }
        if flat_violation(self.problem, &self.point) > GRID_FEASIBILITY_TOL {
            return Ok(None);
        }
        self.evaluated += 1;
        let decision = self.problem.unflatten(&self.point)?;
        Ok(Some(self.problem.normalized_objective(&decision)?))
    }

    /// Best feasible point of the box `lo..=hi` (per axis, stride `step`),
    /// ties broken by the lexicographically smallest index.
    fn search_box(&mut self, lo: &[i64], hi: &[i64], step: i64) -> Result<Option<(Vec<i64>, f64)>> {
        let mut index = lo.to_vec();
        let mut best: Option<(Vec<i64>, f64)> = None;
        loop {
            if let Some(v) = self.value(&index)? {
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((index.clone(), v));
                }
            }
            // Odometer increment, last axis fastest.
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return Ok(best);
                }
                axis -= 1;
                if index[axis] + step <= hi[axis] {
                    index[axis] += step;
                    break;
                }
                index[axis] = lo[axis];
            }
        }
    }
}

/// Maximizes the normalized objective over the feasible points of a uniform
/// lattice with `resolution` points per axis.
pub fn grid_solve(problem: &Problem, resolution: usize) -> Result<GridSolution> {
    let dim = problem.decision_dim();
    if dim > MAX_GRID_DIM {
        return Err(Error::GridTooLarge { dim, max: MAX_GRID_DIM });
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(Error::Invalid(format!(
            "grid resolution must be at least {MIN_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    let res = resolution as i64;
    let mut lattice = Lattice {
        problem,
        dim,
        resolution: res,
        spacing: 2.0 / (res - 1) as f64,
        evaluated: 0,
        point: vec![0.0; dim],
    };
    let total = (resolution as u64).checked_pow(dim as u32).unwrap_or(u64::MAX);
    let exhaustive = total <= EXHAUSTIVE_LIMIT;
    let best = if exhaustive {
        lattice.search_box(&vec![0; dim], &vec![res - 1; dim], 1)?
    } else {
        zoom_search(&mut lattice)?
    };
    // The origin is always feasible, so a best point exists whenever the
    // origin lies on the lattice; odd resolutions guarantee that.
    let (index, objective) = best.ok_or_else(|| Error::Invalid("no feasible grid point".into()))?;
    let point: Vec<f64> = index.iter().map(|&i| lattice.coord(i)).collect();
    let spacing = lattice.spacing;
    Ok(GridSolution {
        decision: problem.unflatten(&point)?,
        objective,
        spacing,
        error_bound: lipschitz_bound(problem) * spacing * (dim as f64).sqrt() / 2.0,
        evaluated: lattice.evaluated,
        exhaustive,
    })
}

fn zoom_search(lattice: &mut Lattice<'_>) -> Result<Option<(Vec<i64>, f64)>> {
    let res = lattice.resolution;
    let dim = lattice.dim;
    let mut step = ((res - 1) / (ZOOM_POINTS - 1)).max(1);
    let lo = vec![0; dim];
    let hi = vec![(res - 1) / step * step; dim];
    let Some(mut best) = lattice.search_box(&lo, &hi, step)? else {
        return Ok(None);
    };
    loop {
        let radius = 3 * step;
        step = (step / 5).max(1);
        // Re-center on the incumbent until the window stops improving it.
        loop {
            let lo: Vec<i64> = best
                .0
                .iter()
                .map(|&c| c - ((c - (c - radius).max(0)) / step) * step)
                .collect();
            let hi: Vec<i64> = best.0.iter().map(|&c| (c + radius).min(res - 1)).collect();
            let candidate = lattice
                .search_box(&lo, &hi, step)?
                .expect("window contains the incumbent");
            if candidate.1 > best.1 {
                best = candidate;
            } else {
                break;
            }
        }
        if step == 1 {
            return Ok(Some(best));
        }
    }
}

/// Crude bound on the objective's Lipschitz constant over `[−1, 1]^dim`.
fn lipschitz_bound(problem: &Problem) -> f64 {
    let risk_bound =
        |dense: &Matrix, coeff: f64, n: usize| 2.0 * coeff * norm2(dense.as_slice()) * 2.0 * (n as f64).sqrt();
    match problem {
        Problem::Single(p) => {
            let (_, l2, l3) = p.lambdas();
            let d = p.exponent();
            norm2(p.alpha())
                + risk_bound(&p.risk().dense(), p.risk_coeff(), p.n())
                + l2 * norm2(p.spread())
                + l3 * d * 2f64.powf(d - 1.0) * norm2(p.impact())
        }
        Problem::Multi(p) => {
            let (_, l2, l3) = p.lambdas();
            let d = p.exponent();
            let dense = p.risk().dense();
            (1..=p.horizon())
                .map(|t| {
                    norm2(p.alpha(t))
                        + risk_bound(&dense, p.risk_coeff(), p.n())
                        + 2.0 * l2 * norm2(p.spread(t))
                        + 2.0 * l3 * d * 2f64.powf(d - 1.0) * norm2(p.impact(t))
                })
                .sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExposureConstraints, FactorRiskModel, SinglePeriodData, SinglePeriodProblem};

    fn linear(alpha: Vec<f64>) -> Problem {
        let n = alpha.len();
        Problem::Single(
            SinglePeriodProblem::new(SinglePeriodData {
                gmv: 1.0,
                alpha,
                risk: FactorRiskModel::new(Matrix::zeros(n, 1), Matrix::identity(1), vec![0.0; n]).unwrap(),
                spread: vec![0.0; n],
                impact: vec![0.0; n],
                exponent: 1.5,
                lambda1: 0.0,
                lambda2: 0.0,
                lambda3: 0.0,
                exposures: ExposureConstraints::none(n),
                w0: vec![0.0; n],
            })
            .unwrap(),
        )
    }

    #[test]
    fn linear_objective_picks_signed_vertex() {
        let g = grid_solve(&linear(vec![-0.3, 0.1]), 101).unwrap();
        assert_eq!(g.decision, Decision::Weights(vec![-1.0, 0.0]));
        assert!((g.objective - 0.3).abs() < 1e-15);
        assert!(g.exhaustive);
    }

    #[test]
    fn rejects_large_dimension_and_coarse_grids() {
        assert_eq!(
            grid_solve(&linear(vec![0.0; 5]), 101).unwrap_err(),
            Error::GridTooLarge { dim: 5, max: 4 }
        );
        assert!(grid_solve(&linear(vec![0.0; 2]), 51).is_err());
    }

    #[test]
    fn lattice_contains_origin_and_corners() {
        let p = linear(vec![0.0]);
        let lattice = Lattice {
            problem: &p,
            dim: 1,
            resolution: 2001,
            spacing: 0.001,
            evaluated: 0,
            point: vec![0.0],
        };
        assert_eq!(lattice.coord(0), -1.0);
        assert_eq!(lattice.coord(1000), 0.0);
        assert_eq!(lattice.coord(2000), 1.0);
    }

    #[test]
    fn zoom_matches_exhaustive_on_linear_problem() {
        let p = linear(vec![0.2, -0.1, 0.05, 0.3]);
        let g = grid_solve(&p, 2001).unwrap();
        assert!(!g.exhaustive);
        assert_eq!(g.decision, Decision::Weights(vec![0.0, 0.0, 0.0, 1.0]));
    }
}
