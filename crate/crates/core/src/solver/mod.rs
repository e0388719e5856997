//! Primal-dual splitting solver (Condat–Vũ) for both problem classes.
//!
//! Every instance is cast as `min f(x) + g(x) + h(Kx)` in GMV-normalized
//! units, where `f` is the smooth return-plus-risk part, `g` the indicator of
//! the per-period ℓ1 budget ball and `h` the separable trade costs plus the
//! exposure box indicators. One iteration is
//!
//! ```text
//! x⁺ = prox_{τg}(x − τ∇f(x) − τKᵀy)
//! y⁺ = prox_{σh*}(y + σK(2x⁺ − x))
//! ```
//!
//! and the run stops once the scaled fixed-point residual has stayed below
//! the tolerance for a full window of checks. The residual of a primal-dual
//! iteration oscillates, and a single trough can sit far below the trend. The `σ/τ` balance starts from a scale estimate and is retuned
//! at doubling intervals toward `‖Δy‖/‖Δx‖`, with geometrically shrinking
//! changes. A solve is single-threaded with a fixed reduction order, so two
//! runs on the same input produce bitwise-identical outcomes.

mod norm;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist_inf, norm2, norm_inf};
use crate::model::{Decision, FactorRiskModel, MultiPeriodProblem, Problem, SinglePeriodProblem};
use crate::prox::{conj_prox_trade_cost_scalar, project_l1_ball_in_place};

pub use norm::estimate_operator_norm;

/// Inflation applied to power-iteration norm estimates, which approach from below.
pub const NORM_INFLATION: f64 = 1.05;
/// Margin on the step-size contract `τσ‖K‖² + τL_f/2 ≤ 1`.
pub const STEP_MARGIN: f64 = 1.05;
const TRACE_CAPACITY: usize = 1024;
const POWER_SEED: u64 = 0x5eed_1e55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fixed-point residual threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Wall-clock limit in seconds, setup included.
    pub time_limit: f64,
    /// Multiplier `γ` on the automatic initial balance `σ = γc`, `τ = c/γ`.
    pub step_ratio: f64,
    pub power_iterations: usize,
    pub residual_check_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 500_000,
            time_limit: 360.0,
            step_ratio: 1.0,
            power_iterations: 100,
            residual_check_stride: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 || self.power_iterations == 0 || self.residual_check_stride == 0 {
            return Err(Error::Invalid("iteration limits must be positive".into()));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::Invalid(format!(
                "time limit must be positive, got {}",
                self.time_limit
            )));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio.is_finite()) {
            return Err(Error::Invalid(format!(
                "step ratio must be positive, got {}",
                self.step_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::IterationLimit => "IterationLimit",
            SolveStatus::TimeLimit => "TimeLimit",
            SolveStatus::NumericalFailure => "NumericalFailure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(SolveStatus::Converged),
            "IterationLimit" => Ok(SolveStatus::IterationLimit),
            "TimeLimit" => Ok(SolveStatus::TimeLimit),
            "NumericalFailure" => Ok(SolveStatus::NumericalFailure),
            other => Err(Error::Parse(format!("unknown status {other:?}"))),
        }
    }
}

/// Result of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Weights for single-period problems, `w₁ … w_{T−1}` for trajectories.
    pub decision: Decision,
    /// Objective in currency units.
    pub objective: f64,
    pub residual: f64,
    /// `(iteration, residual)` samples, thinned geometrically.
    pub residual_trace: Vec<(usize, f64)>,
    pub iterations: usize,
    pub elapsed: f64,
    pub status: SolveStatus,
    pub primal_step: f64,
    pub dual_step: f64,
}

/// State snapshot consumed by [`fixed_point_residual`].
#[derive(Debug, Clone, Copy)]
pub struct IterationState<'a> {
    pub x: &'a [f64],
    pub x_next: &'a [f64],
    pub y: &'a [f64],
    pub y_next: &'a [f64],
    pub primal_step: f64,
    pub dual_step: f64,
}

/// `max(‖x⁺−x‖∞ / (τ(1+‖x‖∞)), ‖y⁺−y‖∞ / (σ(1+‖y‖∞)))`.
pub fn fixed_point_residual(state: &IterationState<'_>) -> f64 {
    let primal = dist_inf(state.x_next, state.x) / (state.primal_step * (1.0 + norm_inf(state.x)));
    let dual = dist_inf(state.y_next, state.y) / (state.dual_step * (1.0 + norm_inf(state.y)));
    primal.max(dual)
}

/// Gradient of the normalized smooth part `−αᵀw + λ₁GMV·wᵀΣw`.
pub fn smooth_gradient_single(problem: &SinglePeriodProblem, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != problem.n() {
        return Err(Error::dim("weights", problem.n(), w.len()));
    }
    let mut out = vec![0.0; w.len()];
    let mut scratch = vec![0.0; 2 * problem.risk().num_factors()];
    risk_gradient(
        problem.risk(),
        2.0 * problem.risk_coeff(),
        problem.alpha(),
        w,
        None,
        &mut scratch,
        &mut out,
    );
    Ok(out)
}

/// Per-period gradient `−α_t + 2λ₁GMV·Σ(w_t − w_T)` for `t = 1..T−1`.
pub fn smooth_gradient_multi(problem: &MultiPeriodProblem, trajectory: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if trajectory.len() != problem.free_periods() {
        return Err(Error::dim(
            "trajectory periods",
            problem.free_periods(),
            trajectory.len(),
        ));
    }
    let mut scratch = vec![0.0; 2 * problem.risk().num_factors()];
    let mut dev = vec![0.0; problem.n()];
    trajectory
        .iter()
        .enumerate()
        .map(|(k, w)| {
            if w.len() != problem.n() {
                return Err(Error::dim("trajectory weights", problem.n(), w.len()));
            }
            let mut out = vec![0.0; w.len()];
            risk_gradient(
                problem.risk(),
                2.0 * problem.risk_coeff(),
                problem.alpha(k + 1),
                w,
                Some((problem.w_terminal(), &mut dev)),
                &mut scratch,
                &mut out,
            );
            Ok(out)
        })
        .collect()
}

/// `out = −α + coeff·Σ(w − center)`.
fn risk_gradient(
    risk: &FactorRiskModel,
    coeff: f64,
    alpha: &[f64],
    w: &[f64],
    center: Option<(&[f64], &mut Vec<f64>)>,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    match center {
        Some((c, dev)) => {
            for ((d, a), b) in dev.iter_mut().zip(w).zip(c) {
                *d = a - b;
            }
            risk.matvec_into(dev, scratch, out);
        }
        None => risk.matvec_into(w, scratch, out),
    }
    for (o, a) in out.iter_mut().zip(alpha) {
        *o = coeff * *o - a;
    }
}

/// The splitting data of one instance: `f`, `g`, `K` and `h`.
trait Splitting {
    fn primal_dim(&self) -> usize;
    fn dual_dim(&self) -> usize;
    fn smooth_gradient(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace);
    fn project_primal(&self, x: &mut [f64], ws: &mut Workspace);
    fn apply_k(&self, x: &[f64], out: &mut [f64]);
    fn apply_kt(&self, y: &[f64], out: &mut [f64]);
    /// In-place `prox_{σh*}`.
    fn conj_prox(&self, y: &mut [f64], sigma: f64);
    /// Hessian norm of `f` divided by the risk curvature factor: here `‖Σ‖`.
    fn risk(&self) -> &FactorRiskModel;
    fn risk_coeff(&self) -> f64;
    fn dual_terms(&self) -> &DualTerms;
}

#[derive(Default)]
struct Workspace {
    factor: Vec<f64>,
    dev: Vec<f64>,
    sort: Vec<f64>,
}

/// Separable trade costs on the first block of the dual vector, followed by box indicators.
struct DualTerms {
    anchor: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    exponent: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DualTerms {
    fn conj_prox(&self, y: &mut [f64], sigma: f64) {
        let k = self.anchor.len();
        let (trade, boxes) = y.split_at_mut(k);
        for i in 0..k {
            trade[i] =
                conj_prox_trade_cost_scalar(trade[i], sigma, self.anchor[i], self.c1[i], self.c2[i], self.exponent);
        }
        for ((v, l), u) in boxes.iter_mut().zip(&self.lower).zip(&self.upper) {
            let z = *v / sigma;
            *v -= sigma * z.clamp(*l, *u);
        }
    }
}

struct SingleSplitting<'a> {
    problem: &'a SinglePeriodProblem,
    dual: DualTerms,
}

impl<'a> SingleSplitting<'a> {
    fn new(problem: &'a SinglePeriodProblem) -> Self {
        let (_, l2, l3) = problem.lambdas();
        let dual = DualTerms {
            anchor: problem.w0().to_vec(),
            c1: problem.spread().iter().map(|s| l2 * s).collect(),
            c2: problem.impact().iter().map(|q| l3 * q).collect(),
            exponent: problem.exponent(),
            lower: problem.exposures().lower().to_vec(),
            upper: problem.exposures().upper().to_vec(),
        };
        SingleSplitting { problem, dual }
    }
}

impl Splitting for SingleSplitting<'_> {
    fn dual_terms(&self) -> &DualTerms {
        &self.dual
    }

    fn primal_dim(&self) -> usize {
        self.problem.n()
    }

    fn dual_dim(&self) -> usize {
        self.problem.n() + self.problem.exposures().rows()
    }

    fn smooth_gradient(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        risk_gradient(
            self.problem.risk(),
            2.0 * self.problem.risk_coeff(),
            self.problem.alpha(),
            x,
            None,
            &mut ws.factor,
            out,
        );
    }

    fn project_primal(&self, x: &mut [f64], ws: &mut Workspace) {
        project_l1_ball_in_place(x, 1.0, &mut ws.sort);
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let n = self.problem.n();
        let (trade, exposure) = out.split_at_mut(n);
        trade.copy_from_slice(x);
        self.problem.exposures().matrix().matvec_into(x, exposure);
    }

    fn apply_kt(&self, y: &[f64], out: &mut [f64]) {
        let n = self.problem.n();
        let (trade, exposure) = y.split_at(n);
        self.problem.exposures().matrix().matvec_t_into(exposure, out);
        for (o, t) in out.iter_mut().zip(trade) {
            *o += t;
        }
    }

    fn conj_prox(&self, y: &mut [f64], sigma: f64) {
        self.dual.conj_prox(y, sigma);
    }

    fn risk(&self) -> &FactorRiskModel {
        self.problem.risk()
    }

    fn risk_coeff(&self) -> f64 {
        self.problem.risk_coeff()
    }
}

/// Stacked variable `(w₁, …, w_{T−1})`; dual layout is the `T` trade
/// increments followed by the `T − 1` exposure blocks.
struct MultiSplitting<'a> {
    problem: &'a MultiPeriodProblem,
    dual: DualTerms,
}

impl<'a> MultiSplitting<'a> {
    fn new(problem: &'a MultiPeriodProblem) -> Self {
        let n = problem.n();
        let t_max = problem.horizon();
        let (_, l2, l3) = problem.lambdas();
        let mut anchor = Vec::with_capacity(n * t_max);
        let mut c1 = Vec::with_capacity(n * t_max);
        let mut c2 = Vec::with_capacity(n * t_max);
        for t in 1..=t_max {
            // Increment t is (Kx)_t plus a constant: +… −w₀ at t = 1, +w_T at t = T.
            // The constants become anchors of the cost term.
            match t {
                1 => anchor.extend_from_slice(problem.w0()),
                _ if t == t_max => anchor.extend(problem.w_terminal().iter().map(|v| -v)),
                _ => anchor.extend(std::iter::repeat_n(0.0, n)),
            }
            c1.extend(problem.spread(t).iter().map(|s| l2 * s));
            c2.extend(problem.impact(t).iter().map(|q| l3 * q));
        }
        let periods = problem.free_periods();
        let ex = problem.exposures();
        let lower = ex.lower().repeat(periods);
        let upper = ex.upper().repeat(periods);
        MultiSplitting {
            problem,
            dual: DualTerms {
                anchor,
                c1,
                c2,
                exponent: problem.exponent(),
                lower,
                upper,
            },
        }
    }
}

impl Splitting for MultiSplitting<'_> {
    fn dual_terms(&self) -> &DualTerms {
        &self.dual
    }

    fn primal_dim(&self) -> usize {
        self.problem.n() * self.problem.free_periods()
    }

    fn dual_dim(&self) -> usize {
        let p = self.problem;
        p.n() * p.horizon() + p.exposures().rows() * p.free_periods()
    }

    fn smooth_gradient(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let n = self.problem.n();
        let coeff = 2.0 * self.problem.risk_coeff();
        for (k, (w, g)) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)).enumerate() {
            risk_gradient(
                self.problem.risk(),
                coeff,
                self.problem.alpha(k + 1),
                w,
                Some((self.problem.w_terminal(), &mut ws.dev)),
                &mut ws.factor,
                g,
            );
        }
    }

    fn project_primal(&self, x: &mut [f64], ws: &mut Workspace) {
        for block in x.chunks_exact_mut(self.problem.n()) {
            project_l1_ball_in_place(block, 1.0, &mut ws.sort);
        }
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let n = self.problem.n();
        let t_max = self.problem.horizon();
        let (trade, exposure) = out.split_at_mut(n * t_max);
        for t in 0..t_max {
            let z = &mut trade[t * n..(t + 1) * n];
            let cur = (t < t_max - 1).then(|| &x[t * n..(t + 1) * n]);
            let prev = (t > 0).then(|| &x[(t - 1) * n..t * n]);
            match (cur, prev) {
                (Some(c), Some(p)) => {
                    for i in 0..n {
                        z[i] = c[i] - p[i];
                    }
                }
                (Some(c), None) => z.copy_from_slice(c),
                (None, Some(p)) => {
                    for i in 0..n {
                        z[i] = -p[i];
                    }
                }
                (None, None) => z.iter_mut().for_each(|v| *v = 0.0),
            }
        }
        let m = self.problem.exposures().rows();
        if m > 0 {
            let a = self.problem.exposures().matrix();
            for (w, e) in x.chunks_exact(n).zip(exposure.chunks_exact_mut(m)) {
                a.matvec_into(w, e);
            }
        }
    }

    fn apply_kt(&self, y: &[f64], out: &mut [f64]) {
        let n = self.problem.n();
        let t_max = self.problem.horizon();
        let (trade, exposure) = y.split_at(n * t_max);
        let m = self.problem.exposures().rows();
        let a = self.problem.exposures().matrix();
        for (k, o) in out.chunks_exact_mut(n).enumerate() {
            if m > 0 {
                a.matvec_t_into(&exposure[k * m..(k + 1) * m], o);
            } else {
                o.iter_mut().for_each(|v| *v = 0.0);
            }
            let here = &trade[k * n..(k + 1) * n];
            let next = &trade[(k + 1) * n..(k + 2) * n];
            for i in 0..n {
                o[i] += here[i] - next[i];
            }
        }
    }

    fn conj_prox(&self, y: &mut [f64], sigma: f64) {
        self.dual.conj_prox(y, sigma);
    }

    fn risk(&self) -> &FactorRiskModel {
        self.problem.risk()
    }

    fn risk_coeff(&self) -> f64 {
        self.problem.risk_coeff()
    }
}

/// Step sizes satisfying `τσ‖K‖² + τL_f/2 ≤ 1/STEP_MARGIN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub primal: f64,
    pub dual: f64,
    pub k_norm: f64,
    pub smooth_lipschitz: f64,
}

impl StepSizes {
    /// `σ = γc`, `τ = c/γ` with `c²‖K‖² + c·L_f/(2γ) = 1/STEP_MARGIN`.
    pub fn new(k_norm: f64, smooth_lipschitz: f64, ratio: f64) -> Self {
        let a = k_norm * k_norm;
        let b = smooth_lipschitz / (2.0 * ratio);
        let rhs = 1.0 / STEP_MARGIN;
        let c = if a > 0.0 {
            2.0 * rhs / (b + (b * b + 4.0 * a * rhs).sqrt())
        } else {
            rhs / b
        };
        let steps = StepSizes {
            primal: c / ratio,
            dual: c * ratio,
            k_norm,
            smooth_lipschitz,
        };
        assert!(
            steps.contract_value() <= 1.0,
            "step-size contract violated: {}",
            steps.contract_value()
        );
        steps
    }

    /// `τσ‖K‖² + τL_f/2`; must not exceed 1.
    pub fn contract_value(&self) -> f64 {
        self.primal * self.dual * self.k_norm * self.k_norm + self.primal * self.smooth_lipschitz / 2.0
    }
}

/// Ratio of the expected dual magnitude to the primal magnitude at the start.
///
/// Dual trade variables live in `[−c₁, c₁]` plus impact slopes and the
/// exposure multipliers balance gradients, so `‖c₁‖ + ‖∇f(x₀)‖` tracks the
/// dual scale; the primal scale is `‖x₀‖`, floored at that of an evenly
/// spread unit book.
fn balance_scale<S: Splitting>(s: &S, x0: &[f64], ws: &mut Workspace) -> f64 {
    let nx = s.primal_dim();
    let mut grad = vec![0.0; nx];
    s.smooth_gradient(x0, &mut grad, ws);
    let dual = norm2(&s.dual_terms().c1) + norm2(&grad);
    let primal = norm2(x0).max((nx as f64).sqrt() / s.risk().n() as f64);
    let raw = dual / primal;
    if raw.is_finite() && raw > 0.0 {
        raw.clamp(BALANCE_MIN, BALANCE_MAX)
    } else {
        1.0
    }
}

const BALANCE_MIN: f64 = 1e-2;
const BALANCE_MAX: f64 = 1e6;

/// Iterations over which every residual check must stay within tolerance
/// before a run counts as converged. Longer than the oscillation period seen
/// on near-linear desk instances.
pub const CONVERGENCE_WINDOW: usize = 200;

/// Iteration of the first primal-weight update; later ones follow at doubling intervals.
const FIRST_WEIGHT_UPDATE: usize = 1000;
const WEIGHT_SMOOTHING: f64 = 0.5;
const WEIGHT_CAP: f64 = 10.0;
const WEIGHT_CAP_DECAY: f64 = 0.8;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(‖K‖, L_f)`, both inflated power-iteration estimates.
fn operator_norms<S: Splitting>(s: &S, config: &SolverConfig) -> (f64, f64) {
    let nx = s.primal_dim();
    let ny = s.dual_dim();
    let k_norm = estimate_operator_norm(
        |x| {
            let mut out = vec![0.0; ny];
            s.apply_k(x, &mut out);
            out
        },
        |y| {
            let mut out = vec![0.0; nx];
            s.apply_kt(y, &mut out);
            out
        },
        nx,
        config.power_iterations,
        POWER_SEED,
    ) * NORM_INFLATION;
    let risk = s.risk();
    let apply_sigma = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        let mut scratch = vec![0.0; 2 * risk.num_factors()];
        risk.matvec_into(v, &mut scratch, &mut out);
        out
    };
    let sigma_norm = if s.risk_coeff() > 0.0 {
        estimate_operator_norm(
            apply_sigma,
            apply_sigma,
            risk.n(),
            config.power_iterations,
            POWER_SEED ^ 1,
        ) * NORM_INFLATION
    } else {
        0.0
    };
    (k_norm, 2.0 * s.risk_coeff() * sigma_norm)
}

struct RunResult {
    x: Vec<f64>,
    residual: f64,
    trace: Vec<(usize, f64)>,
    iterations: usize,
    status: SolveStatus,
    steps: StepSizes,
}

fn push_trace(trace: &mut Vec<(usize, f64)>, every: &mut usize, count: &mut usize, point: (usize, f64)) {
    if (*count).is_multiple_of(*every) {
        if trace.len() == TRACE_CAPACITY {
            let mut k = 0;
            trace.retain(|_| {
                k += 1;
                k % 2 == 1
            });
            *every *= 2;
        }
        if (*count).is_multiple_of(*every) {
            trace.push(point);
        }
    }
    *count += 1;
}

fn run<S: Splitting>(s: &S, x0: &[f64], config: &SolverConfig, start: Instant) -> RunResult {
    let nx = s.primal_dim();
    let ny = s.dual_dim();
    let mut ws = Workspace {
        factor: vec![0.0; 2 * s.risk().num_factors()],
        dev: vec![0.0; s.risk().n()],
        sort: Vec::with_capacity(s.risk().n()),
    };
    let mut x = x0.to_vec();
    s.project_primal(&mut x, &mut ws);
    let balance = balance_scale(s, &x, &mut ws);
    let (k_norm, lf) = operator_norms(s, config);
    let mut ratio = config.step_ratio * balance;
    let mut steps = StepSizes::new(k_norm, lf, ratio);
    let mut tau = steps.primal;
    let mut sigma = steps.dual;
    let mut next_weight_update = FIRST_WEIGHT_UPDATE;
    let mut updates = 0;
    let mut x_ref = x.clone();
    let mut y_ref = vec![0.0; ny];
    log::debug!(
        "setup: primal_dim={nx} dual_dim={ny} k_norm={:.6e} smooth_lipschitz={:.6e} tau={tau:.6e} sigma={sigma:.6e}",
        steps.k_norm,
        steps.smooth_lipschitz
    );
    let mut y = vec![0.0; ny];
    let mut x_next = vec![0.0; nx];
    let mut y_next = vec![0.0; ny];
    let mut grad = vec![0.0; nx];
    let mut kty = vec![0.0; nx];
    let mut xbar = vec![0.0; nx];
    let mut kx = vec![0.0; ny];

    let mut trace = Vec::new();
    let mut trace_every = 1;
    let mut trace_count = 0;
    let mut residual = f64::INFINITY;
    let stride = config.residual_check_stride;
    let mut below_since: Option<usize> = None;

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    if start.elapsed().as_secs_f64() >= config.time_limit {
        status = SolveStatus::TimeLimit;
    } else {
        for it in 1..=config.max_iterations {
            s.smooth_gradient(&x, &mut grad, &mut ws);
            s.apply_kt(&y, &mut kty);
            for i in 0..nx {
                x_next[i] = x[i] - tau * (grad[i] + kty[i]);
            }
            s.project_primal(&mut x_next, &mut ws);
            for i in 0..nx {
                xbar[i] = 2.0 * x_next[i] - x[i];
            }
            s.apply_k(&xbar, &mut kx);
            for i in 0..ny {
                y_next[i] = y[i] + sigma * kx[i];
            }
            s.conj_prox(&mut y_next, sigma);
            iterations = it;

            if it % stride == 0 || it == config.max_iterations {
                if !all_finite(&x_next) || !all_finite(&y_next) {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
                residual = fixed_point_residual(&IterationState {
                    x: &x,
                    x_next: &x_next,
                    y: &y,
                    y_next: &y_next,
                    primal_step: tau,
                    dual_step: sigma,
                });
                push_trace(&mut trace, &mut trace_every, &mut trace_count, (it, residual));
                if it == next_weight_update {
                    next_weight_update *= 2;
                    let dx = dist2(&x_next, &x_ref);
                    let dy = dist2(&y_next, &y_ref);
                    if dx > 0.0 && dy > 0.0 {
                        // Geometric smoothing toward ‖Δy‖/‖Δx‖; the cap on each change
                        // shrinks geometrically so the ratio settles.
                        let target = ((dy / dx).ln() * WEIGHT_SMOOTHING + ratio.ln() * (1.0 - WEIGHT_SMOOTHING)).exp();
                        let cap = 1.0 + WEIGHT_CAP * WEIGHT_CAP_DECAY.powi(updates);
                        ratio = target.clamp(ratio / cap, ratio * cap);
                        updates += 1;
                        steps = StepSizes::new(k_norm, lf, ratio);
                        tau = steps.primal;
                        sigma = steps.dual;
                    }
                    x_ref.copy_from_slice(&x_next);
                    y_ref.copy_from_slice(&y_next);
                }
                if residual > config.tolerance {
                    below_since = None;
                } else if it - *below_since.get_or_insert(it) >= CONVERGENCE_WINDOW {
                    std::mem::swap(&mut x, &mut x_next);
                    std::mem::swap(&mut y, &mut y_next);
                    status = SolveStatus::Converged;
                    break;
                }
                if start.elapsed().as_secs_f64() >= config.time_limit {
                    std::mem::swap(&mut x, &mut x_next);
                    std::mem::swap(&mut y, &mut y_next);
                    status = SolveStatus::TimeLimit;
                    break;
                }
            }
            std::mem::swap(&mut x, &mut x_next);
            std::mem::swap(&mut y, &mut y_next);
        }
    }
    if status == SolveStatus::IterationLimit && !all_finite(&x) {
        status = SolveStatus::NumericalFailure;
    }
    RunResult {
        x,
        residual,
        trace,
        iterations,
        status,
        steps,
    }
}

fn finish(problem: &Problem, r: RunResult, start: Instant) -> Result<SolveOutcome> {
    let decision = problem.unflatten(&r.x)?;
    let objective = if r.status == SolveStatus::NumericalFailure {
        f64::NAN
    } else {
        problem.objective(&decision)?
    };
    Ok(SolveOutcome {
        decision,
        objective,
        residual: r.residual,
        residual_trace: r.trace,
        iterations: r.iterations,
        elapsed: start.elapsed().as_secs_f64(),
        status: r.status,
        primal_step: r.steps.primal,
        dual_step: r.steps.dual,
    })
}

/// Solves a single-period problem starting from `w₀`.
pub fn solve_single(problem: &SinglePeriodProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let splitting = SingleSplitting::new(problem);
    let r = run(&splitting, problem.w0(), config, start);
    log::debug!(
        "single solve: status={} iterations={} residual={:.3e}",
        r.status,
        r.iterations,
        r.residual
    );
    finish(&Problem::Single(problem.clone()), r, start)
}

/// Solves a multi-period problem starting from `w_t = w₀` for every free period.
pub fn solve_multi(problem: &MultiPeriodProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let splitting = MultiSplitting::new(problem);
    let x0 = problem.w0().repeat(problem.free_periods());
    let r = run(&splitting, &x0, config, start);
    log::debug!(
        "multi solve: status={} iterations={} residual={:.3e}",
        r.status,
        r.iterations,
        r.residual
    );
    finish(&Problem::Multi(problem.clone()), r, start)
}

/// Dispatches on the problem kind.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveOutcome> {
    match problem {
        Problem::Single(p) => solve_single(p, config),
        Problem::Multi(p) => solve_multi(p, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_zero_at_fixed_point() {
        let x = [0.3, -0.1];
        let y = [1.0];
        let r = fixed_point_residual(&IterationState {
            x: &x,
            x_next: &x,
            y: &y,
            y_next: &y,
            primal_step: 0.5,
            dual_step: 2.0,
        });
        assert_eq!(r, 0.0);
    }

    #[test]
    fn residual_direct_formula() {
        let r = fixed_point_residual(&IterationState {
            x: &[0.0],
            x_next: &[1e-8],
            y: &[0.0],
            y_next: &[0.0],
            primal_step: 1.0,
            dual_step: 1.0,
        });
        assert_eq!(r, 1e-8);
    }

    #[test]
    fn step_contract_holds_with_margin() {
        for (k, lf, g) in [(1.0, 0.0, 1.0), (20.0, 5.0, 0.1), (2.0, 1e4, 10.0), (1.05, 1e-3, 1.0)] {
            let s = StepSizes::new(k, lf, g);
            assert!((s.contract_value() - 1.0 / STEP_MARGIN).abs() < 1e-12);
            assert!((s.dual / s.primal - g * g).abs() < 1e-9 * g * g);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            tolerance: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            residual_check_stride: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn status_round_trips_through_strings() {
        for s in [
            SolveStatus::Converged,
            SolveStatus::IterationLimit,
            SolveStatus::TimeLimit,
            SolveStatus::NumericalFailure,
        ] {
            assert_eq!(s.as_str().parse::<SolveStatus>().unwrap(), s);
        }
        assert!("Done".parse::<SolveStatus>().is_err());
    }

    #[test]
    fn trace_is_thinned_not_truncated() {
        let mut trace = Vec::new();
        let (mut every, mut count) = (1, 0);
        for i in 0..10_000 {
            push_trace(&mut trace, &mut every, &mut count, (i, 0.0));
        }
        assert!(trace.len() <= TRACE_CAPACITY);
        assert_eq!(trace[0].0, 0);
        assert!(trace.last().unwrap().0 > 9_000);
    }
}
