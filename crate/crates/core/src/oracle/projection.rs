//! Euclidean projection onto `{‖w‖₁ ≤ 1} ∩ {L ≤ Aw ≤ U}` by Dykstra's
//! alternating projections, applied block by block for trajectories.

use crate::error::{Error, Result};
use crate::linalg::{dist_inf, dot, norm1, norm_inf};
use crate::model::{ExposureConstraints, Problem};
use crate::prox::project_l1_ball_in_place;

const MAX_SWEEPS: usize = 20_000;
const STOP_TOL: f64 = 1e-15;

/// Largest budget or exposure violation over all blocks of a flat decision.
pub fn flat_violation(problem: &Problem, x: &[f64]) -> f64 {
    let n = problem.n();
    let ex = problem.exposures();
    x.chunks(n)
        .map(|w| ex.max_violation(w).max(norm1(w) - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// Projects a flat decision onto the feasible set of `problem`.
pub fn project_feasible(problem: &Problem, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != problem.decision_dim() {
        return Err(Error::dim("decision", problem.decision_dim(), x.len()));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut projector = BlockProjector::new(problem.exposures());
    for block in x.chunks(problem.n()) {
        out.extend(projector.project(block));
    }
    Ok(out)
}

pub(crate) struct BlockProjector<'a> {
    exposures: &'a ExposureConstraints,
    row_norms: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> BlockProjector<'a> {
    pub(crate) fn new(exposures: &'a ExposureConstraints) -> Self {
        let a = exposures.matrix();
        let row_norms = (0..a.rows()).map(|j| dot(a.row(j), a.row(j))).collect();
        BlockProjector {
            exposures,
            row_norms,
            scratch: Vec::new(),
        }
    }

    fn violation(&self, w: &[f64]) -> f64 {
        self.exposures.max_violation(w).max(norm1(w) - 1.0).max(0.0)
    }

    fn project_slab(&self, j: usize, w: &mut [f64]) {
        let nrm = self.row_norms[j];
        if nrm == 0.0 {
            return;
        }
        let a = self.exposures.matrix().row(j);
        let v = dot(a, w);
        let shift = if v > self.exposures.upper()[j] {
            (v - self.exposures.upper()[j]) / nrm
        } else if v < self.exposures.lower()[j] {
            (v - self.exposures.lower()[j]) / nrm
        } else {
            return;
        };
        for (wi, ai) in w.iter_mut().zip(a) {
            *wi -= shift * ai;
        }
    }

    pub(crate) fn project(&mut self, z: &[f64]) -> Vec<f64> {
        if self.violation(z) == 0.0 {
            return z.to_vec();
        }
        let n = z.len();
        let sets = self.exposures.rows() + 1;
        let mut x = z.to_vec();
        let mut increments = vec![vec![0.0; n]; sets];
        let mut y = vec![0.0; n];
        let mut prev = vec![0.0; n];
        for _ in 0..MAX_SWEEPS {
            prev.copy_from_slice(&x);
            // The iterate can stall while the increments still move, so both
            // must settle before stopping.
            let mut moved: f64 = 0.0;
            for (s, inc) in increments.iter_mut().enumerate() {
                for i in 0..n {
                    y[i] = x[i] + inc[i];
                }
                x.copy_from_slice(&y);
                if s == 0 {
                    let mut scratch = std::mem::take(&mut self.scratch);
                    project_l1_ball_in_place(&mut x, 1.0, &mut scratch);
                    self.scratch = scratch;
                } else {
                    self.project_slab(s - 1, &mut x);
                }
                for i in 0..n {
                    let next = y[i] - x[i];
                    moved = moved.max((next - inc[i]).abs());
                    inc[i] = next;
                }
            }
            if dist_inf(&x, &prev).max(moved) <= STOP_TOL * (1.0 + norm_inf(&x)) {
                break;
            }
        }
        x
    }
}
