//! Finite-difference checks of the analytic smooth gradients and of the
//! scalar prox optimality condition.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Matrix};
use crate::model::{Decision, Problem};
use crate::prox::TradeCostCoeffs;
use crate::solver::{smooth_gradient_multi, smooth_gradient_single};

/// Dense `vᵀMv`.
fn dense_quad(m: &Matrix, v: &[f64]) -> f64 {
    (0..v.len()).map(|i| v[i] * dot(m.row(i), v)).sum()
}

/// Normalized smooth part evaluated with the dense covariance.
fn smooth_value(problem: &Problem, sigma: &Matrix, x: &[f64]) -> f64 {
    match problem {
        Problem::Single(p) => -dot(p.alpha(), x) + p.risk_coeff() * dense_quad(sigma, x),
        Problem::Multi(p) => {
            let target = p.w_terminal();
            x.chunks(p.n())
                .enumerate()
                .map(|(k, w)| {
                    let dev: Vec<f64> = w.iter().zip(target).map(|(a, b)| a - b).collect();
                    -dot(p.alpha(k + 1), w) + p.risk_coeff() * dense_quad(sigma, &dev)
                })
                .sum()
        }
    }
}

/// Max component error of the analytic smooth gradient against central
/// differences, relative to the gradient's largest component.
pub fn gradient_check(problem: &Problem, decision: &Decision, step: f64) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::Invalid(format!("step must lie in [1e-8, 1e-4], got {step}")));
    }
    let x = problem.flatten(decision)?;
    let (analytic, sigma) = match (problem, decision) {
        (Problem::Single(p), Decision::Weights(w)) => (smooth_gradient_single(p, w)?, p.risk().dense()),
        (Problem::Multi(p), Decision::Trajectory(t)) => (smooth_gradient_multi(p, t)?.concat(), p.risk().dense()),
        _ => unreachable!("flatten validated the decision shape"),
    };
    let mut probe = x.clone();
    let mut max_err: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = smooth_value(problem, &sigma, &probe);
        probe[i] = x[i] - step;
        let down = smooth_value(problem, &sigma, &probe);
        probe[i] = x[i];
        max_err = max_err.max(((up - down) / (2.0 * step) - analytic[i]).abs());
    }
    Ok(max_err / norm_inf(&analytic).max(f64::MIN_POSITIVE))
}

/// Subdifferential of `y ↦ (y − x)²/(2τ) + h(y)` as an interval.
fn prox_subdifferential(x: f64, tau: f64, c: &TradeCostCoeffs, y: f64) -> (f64, f64) {
    let g = (y - x) / tau;
    let u = y - c.anchor;
    if u == 0.0 {
        (g - c.spread_coeff, g + c.spread_coeff)
    } else {
        let slope = c.spread_coeff + c.impact_coeff * c.exponent * u.abs().powf(c.exponent - 1.0);
        let v = g + slope.copysign(u);
        (v, v)
    }
}

/// Distance from zero to the prox objective's subdifferential at `y`.
pub fn prox_optimality_gap(x: f64, tau: f64, c: &TradeCostCoeffs, y: f64) -> f64 {
    let (lo, hi) = prox_subdifferential(x, tau, c, y);
    if lo > 0.0 {
        lo
    } else if hi < 0.0 {
        -hi
    } else {
        0.0
    }
}

/// Whether the exact prox minimizer lies within one ulp of `y`.
///
/// The subdifferential is strongly monotone, so the minimizer lies in
/// `[y⁻, y⁺]` when it reaches below `tol` at `y⁻` and above `−tol` at `y⁺`.
/// Near the anchor the displacements `y± − a` are exact, which makes this
/// test meaningful where the gap itself is dominated by rounding of `y`.
pub fn prox_minimizer_bracketed(x: f64, tau: f64, c: &TradeCostCoeffs, y: f64, tol: f64) -> bool {
    let (below, _) = prox_subdifferential(x, tau, c, y.next_down());
    let (_, above) = prox_subdifferential(x, tau, c, y.next_up());
    below <= tol && above >= -tol
}

/// Minimizer of the scalar prox objective by repeated 1001-point grids, each
/// zoomed onto the best cell of the last, until the spacing reaches
/// `resolution`. The search interval is the segment between `x` and the anchor,
/// which always contains the minimizer.
pub fn grid_prox_1d(x: f64, tau: f64, c: &TradeCostCoeffs, resolution: f64) -> f64 {
    let obj = |y: f64| (y - x) * (y - x) / (2.0 * tau) + c.value(y);
    let mut lo = x.min(c.anchor);
    let mut hi = x.max(c.anchor);
    if hi - lo < resolution {
        return 0.5 * (lo + hi);
    }
    loop {
        let pts = 1001;
        let h = (hi - lo) / (pts - 1) as f64;
        let mut best = lo;
        let mut best_val = f64::INFINITY;
        for k in 0..pts {
            let y = lo + h * k as f64;
            let val = obj(y);
            if val < best_val {
                best_val = val;
                best = y;
            }
        }
        if h <= resolution {
            return best;
        }
        lo = (best - h).max(x.min(c.anchor));
        hi = (best + h).min(x.max(c.anchor));
    }
}
