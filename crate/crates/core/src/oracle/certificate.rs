//! First-order optimality certificates: no sampled feasible direction may
//! increase the objective at a faster rate than the tolerance.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::projection::{flat_violation, project_feasible};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::{Decision, Problem};

pub const DEFAULT_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];
pub const DEFAULT_DIRECTIONS: usize = 32;
pub const CERTIFICATE_SEED: u64 = 0x6365_7274;
/// Candidates must be feasible to this tolerance.
pub const CANDIDATE_FEASIBILITY_TOL: f64 = 1e-6;
/// At most this many coordinates get `±e_i` probes.
const MAX_COORDINATE_PROBES: usize = 64;
/// Extra violation tolerated along a probed step.
const STEP_SLACK: f64 = 1e-12;
/// Projected directions shorter than this fraction of the probe are treated
/// as pointing into the normal cone.
const BLOCKED_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCertificate {
    /// Largest forward-difference ascent rate over all tested directions.
    pub max_ascent_rate: f64,
    pub directions_tested: usize,
    pub passed: bool,
    pub tolerance: f64,
    pub worst_direction: String,
    /// Probes whose projection left no usable feasible direction.
    pub blocked_directions: usize,
    /// Two-step extrapolation of the worst direction's derivative.
    pub extrapolated_ascent_rate: f64,
    /// Whether every extrapolation agrees with its raw estimate within tolerance.
    pub richardson_consistent: bool,
}

struct Probe {
    label: String,
    raw: Vec<f64>,
}

fn probes(problem: &Problem, base: &[f64], num_directions: usize) -> Vec<Probe> {
    let dim = base.len();
    let mut rng = ChaCha8Rng::seed_from_u64(CERTIFICATE_SEED);
    let mut out = Vec::new();
    for k in 0..num_directions {
        let raw = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        out.push(Probe {
            label: format!("random {k}"),
            raw,
        });
    }
    let coords: Vec<usize> = if dim <= MAX_COORDINATE_PROBES {
        (0..dim).collect()
    } else {
        let mut c = sample(&mut rng, dim, MAX_COORDINATE_PROBES).into_vec();
        c.sort_unstable();
        c
    };
    for i in coords {
        for sign in [1.0, -1.0] {
            let mut raw = vec![0.0; dim];
            raw[i] = sign;
            out.push(Probe {
                label: format!("{}e_{i}", if sign > 0.0 { '+' } else { '-' }),
                raw,
            });
        }
    }
    let n = problem.n();
    let mut anchors = vec![("w0", problem_w0(problem))];
    if let Problem::Multi(p) = problem {
        anchors.push(("w_T", p.w_terminal().to_vec()));
    }
    for (name, anchor) in anchors {
        let toward: Vec<f64> = base.iter().enumerate().map(|(k, b)| anchor[k % n] - b).collect();
        let away = toward.iter().map(|v| -v).collect();
        out.push(Probe {
            label: format!("toward {name}"),
            raw: toward,
        });
        out.push(Probe {
            label: format!("away from {name}"),
            raw: away,
        });
    }
    out
}

fn problem_w0(problem: &Problem) -> Vec<f64> {
    match problem {
        Problem::Single(p) => p.w0().to_vec(),
        Problem::Multi(p) => p.w0().to_vec(),
    }
}

/// Samples feasible directions at the candidate and reports the largest
/// one-sided ascent rate of the normalized objective.
///
/// Directions are built at the projection of the candidate onto the feasible
/// set: a unit probe `u` becomes `P_C(w + h_max·u) − w`, normalized, which is
/// feasible for every step up to its length by convexity.
pub fn directional_check(
    problem: &Problem,
    candidate: &Decision,
    num_directions: usize,
    steps: &[f64],
    tolerance: f64,
) -> Result<OptimalityCertificate> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Invalid(
            "steps must be a nonempty list of positive values".into(),
        ));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    let report = problem.check_feasibility(candidate, CANDIDATE_FEASIBILITY_TOL)?;
    if !report.feasible {
        return Err(Error::Invalid(format!(
            "candidate infeasible: exposure violation {:e}, budget violation {:e}",
            report.max_exposure_violation, report.budget_violation
        )));
    }
    let mut steps = steps.to_vec();
    steps.sort_by(|a, b| b.total_cmp(a));
    let probe_len = steps[0];

    let base = project_feasible(problem, &problem.flatten(candidate)?)?;
    let base_violation = flat_violation(problem, &base);
    let eval = |x: &[f64]| -> Result<f64> { problem.normalized_objective(&problem.unflatten(x)?) };
    let f0 = eval(&base)?;

    let mut max_rate = f64::NEG_INFINITY;
    let mut worst = String::new();
    let mut worst_extrapolated = f64::NEG_INFINITY;
    let mut tested = 0;
    let mut blocked = 0;
    let mut consistent = true;
    let mut point = vec![0.0; base.len()];
    for probe in probes(problem, &base, num_directions) {
        let len = norm2(&probe.raw);
        if len == 0.0 {
            continue;
        }
        for ((p, b), u) in point.iter_mut().zip(&base).zip(&probe.raw) {
            *p = b + probe_len * u / len;
        }
        let target = project_feasible(problem, &point)?;
        let mut dir: Vec<f64> = target.iter().zip(&base).map(|(t, b)| t - b).collect();
        let dlen = norm2(&dir);
        if dlen <= BLOCKED_RATIO * probe_len {
            blocked += 1;
            continue;
        }
        dir.iter_mut().for_each(|v| *v /= dlen);

        let mut rates: Vec<(f64, f64)> = Vec::new();
        for &h in &steps {
            for ((p, b), d) in point.iter_mut().zip(&base).zip(&dir) {
                *p = b + h * d;
            }
            if flat_violation(problem, &point) > base_violation + STEP_SLACK {
                continue;
            }
            rates.push((h, (eval(&point)? - f0) / h));
        }
        if rates.is_empty() {
            blocked += 1;
            continue;
        }
        tested += 1;
        let rate = rates.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let extrapolated = match rates.as_slice() {
            [.., (h1, q1), (h2, q2)] => (h1 * q2 - h2 * q1) / (h1 - h2),
            _ => rate,
        };
        let smallest = rates.last().map(|r| r.1).unwrap_or(rate);
        if (extrapolated - smallest).abs() > tolerance {
            consistent = false;
        }
        if rate > max_rate {
            max_rate = rate;
            worst = probe.label;
            worst_extrapolated = extrapolated;
        }
    }
    if tested == 0 {
        max_rate = 0.0;
        worst_extrapolated = 0.0;
    }
    Ok(OptimalityCertificate {
        max_ascent_rate: max_rate,
        directions_tested: tested,
        passed: max_rate <= tolerance,
        tolerance,
        worst_direction: worst,
        blocked_directions: blocked,
        extrapolated_ascent_rate: worst_extrapolated,
        richardson_consistent: consistent,
    })
}
