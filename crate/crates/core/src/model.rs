//! Problem data, objective evaluation and feasibility checks.
//!
//! Weights are fractions of GMV. Objectives are evaluated in GMV-normalized
//! units (the return-minus-costs expression divided by GMV) and only rescaled
//! to currency when reported, because the raw risk coefficient carries a
//! factor of GMV².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, Matrix};

/// Slack allowed on `‖w₀‖₁ ≤ 1` and on the feasibility of a prescribed terminal portfolio.
pub const ENDPOINT_TOLERANCE: f64 = 1e-9;

/// Factor risk model `Σ = β Σ_f βᵀ + D`. `Σ` itself is never formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RiskModelData", into = "RiskModelData")]
pub struct FactorRiskModel {
    beta: Matrix,
    factor_cov: Matrix,
    specific_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RiskModelData {
    beta: Matrix,
    factor_cov: Matrix,
    specific_var: Vec<f64>,
}

impl TryFrom<RiskModelData> for FactorRiskModel {
    type Error = Error;

    fn try_from(d: RiskModelData) -> Result<Self> {
        FactorRiskModel::new(d.beta, d.factor_cov, d.specific_var)
    }
}

impl From<FactorRiskModel> for RiskModelData {
    fn from(m: FactorRiskModel) -> Self {
        RiskModelData {
            beta: m.beta,
            factor_cov: m.factor_cov,
            specific_var: m.specific_var,
        }
    }
}

impl FactorRiskModel {
    /// Validates shapes, symmetry (1e-12), positive semidefiniteness of the
    /// factor covariance (min eigenvalue ≥ −1e-10·max eigenvalue) and
    /// nonnegative specific variances.
    pub fn new(beta: Matrix, factor_cov: Matrix, specific_var: Vec<f64>) -> Result<Self> {
        let n = beta.rows();
        let p = beta.cols();
        if factor_cov.rows() != p {
            return Err(Error::dim("factor_cov rows", p, factor_cov.rows()));
        }
        if factor_cov.cols() != p {
            return Err(Error::dim("factor_cov cols", p, factor_cov.cols()));
        }
        if specific_var.len() != n {
            return Err(Error::dim("specific_var", n, specific_var.len()));
        }
        if !beta.is_finite() {
            return Err(Error::NonFinite("beta"));
        }
        if !factor_cov.is_finite() {
            return Err(Error::NonFinite("factor_cov"));
        }
        if specific_var.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("specific_var"));
        }
        if let Some(v) = specific_var.iter().find(|v| **v < 0.0) {
            return Err(Error::Invalid(format!("negative specific variance {v}")));
        }
        let scale = factor_cov.as_slice().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            for j in 0..i {
                if (factor_cov[(i, j)] - factor_cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Invalid(format!("factor_cov not symmetric at ({i}, {j})")));
                }
            }
        }
        let (min_eig, max_eig) = extreme_eigenvalues(&factor_cov);
        if min_eig < -1e-10 * max_eig.max(0.0) || (max_eig <= 0.0 && min_eig < -1e-300) {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
                max_eigenvalue: max_eig,
            });
        }
        Ok(FactorRiskModel {
            beta,
            factor_cov,
            specific_var,
        })
    }

    pub fn n(&self) -> usize {
        self.beta.rows()
    }

    pub fn num_factors(&self) -> usize {
        self.beta.cols()
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    pub fn factor_cov(&self) -> &Matrix {
        &self.factor_cov
    }

    pub fn specific_var(&self) -> &[f64] {
        &self.specific_var
    }

    /// `out = Σ v` through the factor structure, `O(np + p²)`.
    /// `scratch` must hold `2p` entries.
    pub fn matvec_into(&self, v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let p = self.num_factors();
        let (exposure, factor) = scratch[..2 * p].split_at_mut(p);
        self.beta.matvec_t_into(v, exposure);
        self.factor_cov.matvec_into(exposure, factor);
        self.beta.matvec_into(factor, out);
        for ((o, d), vi) in out.iter_mut().zip(&self.specific_var).zip(v) {
            *o += d * vi;
        }
    }

    /// `vᵀ Σ v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let exposure = self.beta.matvec_t(v);
        let factor = self.factor_cov.matvec(&exposure);
        let specific: f64 = self.specific_var.iter().zip(v).map(|(d, x)| d * x * x).sum();
        dot(&exposure, &factor) + specific
    }

    /// Densely assembled `Σ`. Only for diagnostics and small-scale checks.
    pub fn dense(&self) -> Matrix {
        let bf = self.beta.matmul(&self.factor_cov);
        let mut sigma = bf.matmul(&self.beta.transpose());
        for i in 0..self.n() {
            sigma[(i, i)] += self.specific_var[i];
        }
        sigma
    }
}

/// Computes `Σ v` without forming `Σ`.
pub fn risk_matvec(model: &FactorRiskModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != model.n() {
        return Err(Error::dim("risk_matvec input (assets)", model.n(), v.len()));
    }
    let mut scratch = vec![0.0; 2 * model.num_factors()];
    let mut out = vec![0.0; model.n()];
    model.matvec_into(v, &mut scratch, &mut out);
    Ok(out)
}

pub(crate) fn extreme_eigenvalues(m: &Matrix) -> (f64, f64) {
    if m.rows() == 0 {
        return (0.0, 0.0);
    }
    let eig = nalgebra::SymmetricEigen::new(m.to_nalgebra());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Linear exposure bounds `lower ≤ A w ≤ upper`; `A` may have zero rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExposureData", into = "ExposureData")]
pub struct ExposureConstraints {
    a: Matrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExposureData {
    a: Matrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<ExposureData> for ExposureConstraints {
    type Error = Error;

    fn try_from(d: ExposureData) -> Result<Self> {
        ExposureConstraints::new(d.a, d.lower, d.upper)
    }
}

impl From<ExposureConstraints> for ExposureData {
    fn from(c: ExposureConstraints) -> Self {
        ExposureData {
            a: c.a,
            lower: c.lower,
            upper: c.upper,
        }
    }
}

impl ExposureConstraints {
    pub fn new(a: Matrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = a.rows();
        if lower.len() != m {
            return Err(Error::dim("exposure lower bounds", m, lower.len()));
        }
        if upper.len() != m {
            return Err(Error::dim("exposure upper bounds", m, upper.len()));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("exposure matrix"));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Invalid(format!("exposure row {j}: lower {l} exceeds upper {u}")));
            }
        }
        Ok(ExposureConstraints { a, lower, upper })
    }

    /// No exposure rows.
    pub fn none(n: usize) -> Self {
        ExposureConstraints {
            a: Matrix::zeros(0, n),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `max_j max((L − Aw)_j, (Aw − U)_j, 0)`.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        let aw = self.a.matvec(w);
        aw.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0, |m, (x, (l, u))| m.max(l - x).max(x - u))
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_exposure_violation: f64,
    pub budget_violation: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    fn from_violations(exposure: f64, budget: f64, tolerance: f64) -> Self {
        FeasibilityReport {
            max_exposure_violation: exposure,
            budget_violation: budget,
            feasible: exposure <= tolerance && budget <= tolerance,
        }
    }
}

/// Plain constructor input for [`SinglePeriodProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePeriodData {
    pub gmv: f64,
    pub alpha: Vec<f64>,
    pub risk: FactorRiskModel,
    pub spread: Vec<f64>,
    pub impact: Vec<f64>,
    pub exponent: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub exposures: ExposureConstraints,
    pub w0: Vec<f64>,
}

/// Single-period rebalance: maximize return minus risk, spread and impact
/// costs subject to exposure bounds and `‖w‖₁ ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SinglePeriodData", into = "SinglePeriodData")]
pub struct SinglePeriodProblem {
    data: SinglePeriodData,
}

impl From<SinglePeriodProblem> for SinglePeriodData {
    fn from(p: SinglePeriodProblem) -> Self {
        p.data
    }
}

impl TryFrom<SinglePeriodData> for SinglePeriodProblem {
    type Error = Error;

    fn try_from(d: SinglePeriodData) -> Result<Self> {
        SinglePeriodProblem::new(d)
    }
}

fn check_shared(
    gmv: f64,
    exponent: f64,
    lambdas: [f64; 3],
    risk: &FactorRiskModel,
    exposures: &ExposureConstraints,
    n: usize,
) -> Result<()> {
    if !(gmv.is_finite() && gmv > 0.0) {
        return Err(Error::Invalid(format!("gmv must be positive, got {gmv}")));
    }
    if !(exponent > 1.0 && exponent <= 2.0) {
        return Err(Error::Invalid(format!(
            "impact exponent must lie in (1, 2], got {exponent}"
        )));
    }
    for (k, l) in lambdas.iter().enumerate() {
        if !(l.is_finite() && *l >= 0.0) {
            return Err(Error::Invalid(format!(
                "lambda{} must be finite and nonnegative, got {l}",
                k + 1
            )));
        }
    }
    if risk.n() != n {
        return Err(Error::dim("risk model assets", n, risk.n()));
    }
    if exposures.n() != n {
        return Err(Error::dim("exposure matrix columns", n, exposures.n()));
    }
    Ok(())
}

fn check_vector(name: &'static str, v: &[f64], n: usize, nonnegative: bool) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(name, n, v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    if nonnegative && v.iter().any(|x| *x < 0.0) {
        return Err(Error::Invalid(format!("{name} must be nonnegative")));
    }
    Ok(())
}

fn check_start(w0: &[f64]) -> Result<()> {
    let l1 = norm1(w0);
    if l1 > 1.0 + ENDPOINT_TOLERANCE {
        return Err(Error::Invalid(format!(
            "initial portfolio violates the budget: ‖w0‖₁ = {l1}"
        )));
    }
    Ok(())
}

impl SinglePeriodProblem {
    pub fn new(data: SinglePeriodData) -> Result<Self> {
        let n = data.alpha.len();
        check_shared(
            data.gmv,
            data.exponent,
            [data.lambda1, data.lambda2, data.lambda3],
            &data.risk,
            &data.exposures,
            n,
        )?;
        check_vector("alpha", &data.alpha, n, false)?;
        check_vector("spread", &data.spread, n, true)?;
        check_vector("impact", &data.impact, n, true)?;
        check_vector("w0", &data.w0, n, false)?;
        check_start(&data.w0)?;
        Ok(SinglePeriodProblem { data })
    }

    pub fn data(&self) -> &SinglePeriodData {
        &self.data
    }

    pub fn into_data(self) -> SinglePeriodData {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.alpha.len()
    }

    pub fn gmv(&self) -> f64 {
        self.data.gmv
    }

    pub fn alpha(&self) -> &[f64] {
        &self.data.alpha
    }

    pub fn risk(&self) -> &FactorRiskModel {
        &self.data.risk
    }

    pub fn spread(&self) -> &[f64] {
        &self.data.spread
    }

    pub fn impact(&self) -> &[f64] {
        &self.data.impact
    }

    pub fn exponent(&self) -> f64 {
        self.data.exponent
    }

    pub fn lambdas(&self) -> (f64, f64, f64) {
        (self.data.lambda1, self.data.lambda2, self.data.lambda3)
    }

    pub fn exposures(&self) -> &ExposureConstraints {
        &self.data.exposures
    }

    pub fn w0(&self) -> &[f64] {
        &self.data.w0
    }

    /// `λ₁·GMV`, the risk coefficient after dividing the objective by GMV.
    pub fn risk_coeff(&self) -> f64 {
        self.data.lambda1 * self.data.gmv
    }

    /// Objective divided by GMV.
    pub fn normalized_objective(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.n() {
            return Err(Error::dim("weights", self.n(), w.len()));
        }
        let (_, l2, l3) = self.lambdas();
        let ret = dot(&self.data.alpha, w);
        let risk = self.risk_coeff() * self.data.risk.quad_form(w);
        let cost = trade_cost(
            w,
            &self.data.w0,
            &self.data.spread,
            &self.data.impact,
            l2,
            l3,
            self.data.exponent,
        );
        Ok(ret - risk - cost)
    }

    pub fn check_feasibility(&self, w: &[f64], tolerance: f64) -> Result<FeasibilityReport> {
        if w.len() != self.n() {
            return Err(Error::dim("weights", self.n(), w.len()));
        }
        let exposure = self.data.exposures.max_violation(w);
        let budget = (norm1(w) - 1.0).max(0.0);
        Ok(FeasibilityReport::from_violations(exposure, budget, tolerance))
    }
}

/// Objective of the single-period problem in currency units.
pub fn eval_single_objective(problem: &SinglePeriodProblem, w: &[f64]) -> Result<f64> {
    Ok(problem.gmv() * problem.normalized_objective(w)?)
}

/// `|x|^d` with an exact zero and exact squares.
#[inline]
pub fn abs_pow(x: f64, d: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else if d == 2.0 {
        a * a
    } else {
        a.powf(d)
    }
}

/// `λ₂ sᵀ|w − a| + λ₃ qᵀ|w − a|^d`.
fn trade_cost(w: &[f64], anchor: &[f64], s: &[f64], q: &[f64], l2: f64, l3: f64, d: f64) -> f64 {
    let mut spread = 0.0;
    let mut impact = 0.0;
    for i in 0..w.len() {
        let u = w[i] - anchor[i];
        spread += s[i] * u.abs();
        impact += q[i] * abs_pow(u, d);
    }
    l2 * spread + l3 * impact
}

/// Plain constructor input for [`MultiPeriodProblem`]. Per-period matrices are
/// `T × n`, row `t − 1` holding period `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPeriodData {
    pub horizon: usize,
    pub gmv: f64,
    pub alpha_t: Matrix,
    pub risk: FactorRiskModel,
    pub spread_t: Matrix,
    pub impact_t: Matrix,
    pub exponent: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub exposures: ExposureConstraints,
    pub w0: Vec<f64>,
    pub w_terminal: Vec<f64>,
}

/// Trajectory problem from a fixed `w₀` to a fixed target `w_T` through the
/// free intermediate portfolios `w₁ … w_{T−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MultiPeriodData", into = "MultiPeriodData")]
pub struct MultiPeriodProblem {
    data: MultiPeriodData,
}

impl From<MultiPeriodProblem> for MultiPeriodData {
    fn from(p: MultiPeriodProblem) -> Self {
        p.data
    }
}

impl TryFrom<MultiPeriodData> for MultiPeriodProblem {
    type Error = Error;

    fn try_from(d: MultiPeriodData) -> Result<Self> {
        MultiPeriodProblem::new(d)
    }
}

impl MultiPeriodProblem {
    pub fn new(data: MultiPeriodData) -> Result<Self> {
        let n = data.w0.len();
        let t = data.horizon;
        if t < 2 {
            return Err(Error::Invalid(format!("horizon must be at least 2, got {t}")));
        }
        check_shared(
            data.gmv,
            data.exponent,
            [data.lambda1, data.lambda2, data.lambda3],
            &data.risk,
            &data.exposures,
            n,
        )?;
        check_vector("w0", &data.w0, n, false)?;
        check_vector("w_terminal", &data.w_terminal, n, false)?;
        for (name, m, nonneg) in [
            ("alpha_t", &data.alpha_t, false),
            ("spread_t", &data.spread_t, true),
            ("impact_t", &data.impact_t, true),
        ] {
            if m.rows() != t {
                return Err(Error::dim(name, t, m.rows()));
            }
            for row in 0..t {
                check_vector(name, m.row(row), n, nonneg)?;
            }
        }
        check_start(&data.w0)?;
        let terminal_budget = norm1(&data.w_terminal) - 1.0;
        let terminal_exposure = data.exposures.max_violation(&data.w_terminal);
        if terminal_budget > ENDPOINT_TOLERANCE || terminal_exposure > ENDPOINT_TOLERANCE {
            return Err(Error::Invalid(format!(
                "terminal portfolio infeasible (budget excess {terminal_budget:e}, exposure violation {terminal_exposure:e})"
            )));
        }
        Ok(MultiPeriodProblem { data })
    }

    pub fn data(&self) -> &MultiPeriodData {
        &self.data
    }

    pub fn into_data(self) -> MultiPeriodData {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.w0.len()
    }

    pub fn horizon(&self) -> usize {
        self.data.horizon
    }

    /// Number of free periods, `T − 1`.
    pub fn free_periods(&self) -> usize {
        self.data.horizon - 1
    }

    pub fn gmv(&self) -> f64 {
        self.data.gmv
    }

    pub fn risk(&self) -> &FactorRiskModel {
        &self.data.risk
    }

    pub fn exponent(&self) -> f64 {
        self.data.exponent
    }

    pub fn lambdas(&self) -> (f64, f64, f64) {
        (self.data.lambda1, self.data.lambda2, self.data.lambda3)
    }

    pub fn exposures(&self) -> &ExposureConstraints {
        &self.data.exposures
    }

    pub fn w0(&self) -> &[f64] {
        &self.data.w0
    }

    pub fn w_terminal(&self) -> &[f64] {
        &self.data.w_terminal
    }

    /// `α_t` for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> &[f64] {
        self.data.alpha_t.row(t - 1)
    }

    /// `s_t` for `t` in `1..=T`.
    pub fn spread(&self, t: usize) -> &[f64] {
        self.data.spread_t.row(t - 1)
    }

    /// `q_t` for `t` in `1..=T`.
    pub fn impact(&self, t: usize) -> &[f64] {
        self.data.impact_t.row(t - 1)
    }

    pub fn risk_coeff(&self) -> f64 {
        self.data.lambda1 * self.data.gmv
    }

    fn check_trajectory(&self, trajectory: &[Vec<f64>]) -> Result<()> {
        if trajectory.len() != self.free_periods() {
            return Err(Error::dim("trajectory periods", self.free_periods(), trajectory.len()));
        }
        for w in trajectory {
            if w.len() != self.n() {
                return Err(Error::dim("trajectory weights", self.n(), w.len()));
            }
        }
        Ok(())
    }

    /// Objective divided by GMV, summed over `t = 1..T` with the fixed endpoints.
    pub fn normalized_objective(&self, trajectory: &[Vec<f64>]) -> Result<f64> {
        self.check_trajectory(trajectory)?;
        let t_max = self.horizon();
        let (_, l2, l3) = self.lambdas();
        let d = self.exponent();
        let rc = self.risk_coeff();
        let target = self.w_terminal();
        let mut total = 0.0;
        let mut prev = self.w0();
        let mut dev = vec![0.0; self.n()];
        for t in 1..=t_max {
            let w: &[f64] = if t == t_max { target } else { &trajectory[t - 1] };
            let mut term = dot(self.alpha(t), w);
            if t < t_max {
                for ((x, a), b) in dev.iter_mut().zip(w).zip(target) {
                    *x = a - b;
                }
                term -= rc * self.risk().quad_form(&dev);
            }
            term -= trade_cost(w, prev, self.spread(t), self.impact(t), l2, l3, d);
            total += term;
            prev = w;
        }
        Ok(total)
    }

    /// Checks periods `1..T−1`; the endpoints are data.
    pub fn check_feasibility(&self, trajectory: &[Vec<f64>], tolerance: f64) -> Result<FeasibilityReport> {
        self.check_trajectory(trajectory)?;
        let mut exposure: f64 = 0.0;
        let mut budget: f64 = 0.0;
        for w in trajectory {
            exposure = exposure.max(self.exposures().max_violation(w));
            budget = budget.max(norm1(w) - 1.0);
        }
        Ok(FeasibilityReport::from_violations(exposure, budget, tolerance))
    }
}

/// Objective of the multi-period problem in currency units.
pub fn eval_multi_objective(problem: &MultiPeriodProblem, trajectory: &[Vec<f64>]) -> Result<f64> {
    Ok(problem.gmv() * problem.normalized_objective(trajectory)?)
}

/// Either problem class, as stored in instance files.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Single(SinglePeriodProblem),
    Multi(MultiPeriodProblem),
}

/// A point in the decision space of a [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decision {
    Weights(Vec<f64>),
    Trajectory(Vec<Vec<f64>>),
}

impl Problem {
    pub fn n(&self) -> usize {
        match self {
            Problem::Single(p) => p.n(),
            Problem::Multi(p) => p.n(),
        }
    }

    pub fn gmv(&self) -> f64 {
        match self {
            Problem::Single(p) => p.gmv(),
            Problem::Multi(p) => p.gmv(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Single(_) => "single",
            Problem::Multi(_) => "multi",
        }
    }

    /// Total number of free decision variables.
    pub fn decision_dim(&self) -> usize {
        match self {
            Problem::Single(p) => p.n(),
            Problem::Multi(p) => p.n() * p.free_periods(),
        }
    }

    pub fn exposures(&self) -> &ExposureConstraints {
        match self {
            Problem::Single(p) => p.exposures(),
            Problem::Multi(p) => p.exposures(),
        }
    }

    /// Flattens a decision into period-major order.
    pub fn flatten(&self, decision: &Decision) -> Result<Vec<f64>> {
        match (self, decision) {
            (Problem::Single(p), Decision::Weights(w)) => {
                if w.len() != p.n() {
                    return Err(Error::dim("weights", p.n(), w.len()));
                }
                Ok(w.clone())
            }
            (Problem::Multi(p), Decision::Trajectory(traj)) => {
                p.check_trajectory(traj)?;
                Ok(traj.concat())
            }
            _ => Err(Error::Invalid("decision shape does not match problem kind".into())),
        }
    }

    pub fn unflatten(&self, x: &[f64]) -> Result<Decision> {
        if x.len() != self.decision_dim() {
            return Err(Error::dim("decision", self.decision_dim(), x.len()));
        }
        Ok(match self {
            Problem::Single(_) => Decision::Weights(x.to_vec()),
            Problem::Multi(p) => Decision::Trajectory(x.chunks(p.n()).map(<[f64]>::to_vec).collect()),
        })
    }

    pub fn normalized_objective(&self, decision: &Decision) -> Result<f64> {
        match (self, decision) {
            (Problem::Single(p), Decision::Weights(w)) => p.normalized_objective(w),
            (Problem::Multi(p), Decision::Trajectory(t)) => p.normalized_objective(t),
            _ => Err(Error::Invalid("decision shape does not match problem kind".into())),
        }
    }

    pub fn objective(&self, decision: &Decision) -> Result<f64> {
        Ok(self.gmv() * self.normalized_objective(decision)?)
    }

    pub fn check_feasibility(&self, decision: &Decision, tolerance: f64) -> Result<FeasibilityReport> {
        if !(tolerance > 0.0) {
            return Err(Error::Invalid(format!("tolerance must be positive, got {tolerance}")));
        }
        match (self, decision) {
            (Problem::Single(p), Decision::Weights(w)) => p.check_feasibility(w, tolerance),
            (Problem::Multi(p), Decision::Trajectory(t)) => p.check_feasibility(t, tolerance),
            _ => Err(Error::Invalid("decision shape does not match problem kind".into())),
        }
    }

    /// The starting point used by the solver: `w₀`, repeated per period for trajectories.
    pub fn start(&self) -> Decision {
        match self {
            Problem::Single(p) => Decision::Weights(p.w0().to_vec()),
            Problem::Multi(p) => Decision::Trajectory(vec![p.w0().to_vec(); p.free_periods()]),
        }
    }
}
