//! Factor risk model estimation from a window of daily returns.
//!
//! Loadings come from a no-intercept least-squares regression of each
//! stock's returns on the factor returns, the factor covariance is the
//! centered sample covariance, and specific variances are the centered sample
//! variances of the regression residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{extreme_eigenvalues, FactorRiskModel};

/// Diagonal ridge added to the normal equations, relative to the mean
/// diagonal of the Gram matrix.
pub const RIDGE: f64 = 1e-10;
/// Lower bound on estimated specific variances.
pub const SPECIFIC_VAR_FLOOR: f64 = 1e-12;
/// Two months of business days.
pub const DEFAULT_MIN_HISTORY: usize = 42;
/// Estimation window of two years of business days.
pub const DEFAULT_WINDOW: usize = 504;

/// Cholesky pivots below this fraction of the largest diagonal entry mark a
/// factor as collinear with the preceding ones.
const PIVOT_RATIO: f64 = 1e-8;

/// Aligned stock and factor returns over one estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    /// `T_w × n` daily simple returns.
    pub stock_returns: Matrix,
    /// `T_w × p` factor returns.
    pub factor_returns: Matrix,
    /// First valid row per stock; rows before it are ignored.
    pub valid_from: Vec<usize>,
}

impl ReturnPanel {
    pub fn new(stock_returns: Matrix, factor_returns: Matrix, valid_from: Vec<usize>) -> Result<Self> {
        let t = stock_returns.rows();
        if t < 2 {
            return Err(Error::InsufficientData(format!("window of {t} rows, need at least 2")));
        }
        if factor_returns.rows() != t {
            return Err(Error::dim("factor return rows", t, factor_returns.rows()));
        }
        if valid_from.len() != stock_returns.cols() {
            return Err(Error::dim("valid_from", stock_returns.cols(), valid_from.len()));
        }
        if !factor_returns.is_finite() {
            return Err(Error::NonFinite("factor returns"));
        }
        for (i, &start) in valid_from.iter().enumerate() {
            if start > t {
                return Err(Error::Invalid(format!(
                    "stock {i}: valid_from {start} beyond window {t}"
                )));
            }
            if (start..t).any(|k| !stock_returns[(k, i)].is_finite()) {
                return Err(Error::Invalid(format!(
                    "stock {i}: non-finite return inside its valid range"
                )));
            }
        }
        Ok(ReturnPanel {
            stock_returns,
            factor_returns,
            valid_from,
        })
    }

    /// Panel where every stock is valid over the whole window.
    pub fn full(stock_returns: Matrix, factor_returns: Matrix) -> Result<Self> {
        let n = stock_returns.cols();
        ReturnPanel::new(stock_returns, factor_returns, vec![0; n])
    }

    pub fn window(&self) -> usize {
        self.stock_returns.rows()
    }

    pub fn n(&self) -> usize {
        self.stock_returns.cols()
    }

    pub fn num_factors(&self) -> usize {
        self.factor_returns.cols()
    }

    pub fn valid_rows(&self, stock: usize) -> usize {
        self.window() - self.valid_from[stock]
    }
}

/// Loadings `n × p` and the per-stock eligibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Loadings {
    pub beta: Matrix,
    pub eligible: Vec<bool>,
}

pub fn estimate_loadings(panel: &ReturnPanel, min_history: usize) -> Result<Loadings> {
    let p = panel.num_factors();
    if min_history < p + 1 {
        return Err(Error::Invalid(format!(
            "min_history {min_history} must be at least p + 1 = {}",
            p + 1
        )));
    }
    let n = panel.n();
    let t = panel.window();
    let f = &panel.factor_returns;
    let mut beta = Matrix::zeros(n, p);
    let mut eligible = vec![false; n];
    // Stocks sharing a start row share the Gram matrix.
    let mut cached: Option<(usize, nalgebra::Cholesky<f64, nalgebra::Dyn>)> = None;
    for i in 0..n {
        let start = panel.valid_from[i];
        if t - start < min_history {
            continue;
        }
        let chol = match &cached {
            Some((s, c)) if *s == start => c.clone(),
            _ => {
                let c = gram_cholesky(f, start)?;
                cached = Some((start, c.clone()));
                c
            }
        };
        let mut rhs = DVector::zeros(p);
        for k in start..t {
            let r = panel.stock_returns[(k, i)];
            for j in 0..p {
                rhs[j] += f[(k, j)] * r;
            }
        }
        let sol = chol.solve(&rhs);
        beta.row_mut(i).copy_from_slice(sol.as_slice());
        eligible[i] = true;
    }
    Ok(Loadings { beta, eligible })
}

/// Cholesky factor of `FᵀF + ridge·I` over rows `start..`. Scaling the ridge
/// with the Gram diagonal keeps the estimate invariant to the return scale.
fn gram_cholesky(f: &Matrix, start: usize) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let p = f.cols();
    let mut g = DMatrix::zeros(p, p);
    for k in start..f.rows() {
        let row = f.row(k);
        for a in 0..p {
            for b in 0..=a {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    let scale = (0..p).map(|j| g[(j, j)]).sum::<f64>() / p as f64;
    if !(scale > 0.0) {
        return Err(Error::RankDeficient { factor: 0 });
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
        g[(a, a)] += RIDGE * scale;
    }
    let max_diag = (0..p).map(|j| g[(j, j)]).fold(0.0, f64::max);
    let chol = g.clone().cholesky().ok_or_else(|| Error::RankDeficient {
        factor: (0..p).min_by(|a, b| g[(*a, *a)].total_cmp(&g[(*b, *b)])).unwrap_or(0),
    })?;
    let l = chol.l_dirty();
    for j in 0..p {
        if l[(j, j)] * l[(j, j)] <= PIVOT_RATIO * max_diag {
            return Err(Error::RankDeficient { factor: j });
        }
    }
    Ok(chol)
}

/// Centered sample covariance with divisor `T_w − 1`.
pub fn estimate_factor_cov(factor_returns: &Matrix) -> Result<Matrix> {
    let t = factor_returns.rows();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "{t} factor observations, need at least 2"
        )));
    }
    let p = factor_returns.cols();
    let mut mean = vec![0.0; p];
    for k in 0..t {
        for (m, v) in mean.iter_mut().zip(factor_returns.row(k)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for k in 0..t {
        for ((c, v), m) in centered.iter_mut().zip(factor_returns.row(k)).zip(&mean) {
            *c = v - m;
        }
        for a in 0..p {
            for b in 0..=a {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let denom = (t - 1) as f64;
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Residual variances and the mask of stocks that fell back to the floor for
/// lack of data.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecificVariance {
    pub variance: Vec<f64>,
    pub flagged: Vec<bool>,
}

pub fn estimate_specific_variance(panel: &ReturnPanel, beta: &Matrix) -> Result<SpecificVariance> {
    let n = panel.n();
    let p = panel.num_factors();
    if beta.rows() != n {
        return Err(Error::dim("beta rows", n, beta.rows()));
    }
    if beta.cols() != p {
        return Err(Error::dim("beta cols", p, beta.cols()));
    }
    let t = panel.window();
    let mut variance = vec![SPECIFIC_VAR_FLOOR; n];
    let mut flagged = vec![false; n];
    let mut resid = Vec::with_capacity(t);
    for i in 0..n {
        let start = panel.valid_from[i];
        let rows = t - start;
        if rows < 2 {
            flagged[i] = true;
            continue;
        }
        let b = beta.row(i);
        resid.clear();
        for k in start..t {
            let fit: f64 = crate::linalg::dot(panel.factor_returns.row(k), b);
            resid.push(panel.stock_returns[(k, i)] - fit);
        }
        let mean = resid.iter().sum::<f64>() / rows as f64;
        let ss: f64 = resid.iter().map(|r| (r - mean) * (r - mean)).sum();
        variance[i] = (ss / (rows - 1) as f64).max(SPECIFIC_VAR_FLOOR);
    }
    Ok(SpecificVariance { variance, flagged })
}

/// Builds a validated model, symmetrizing the factor covariance first.
pub fn assemble_risk_model(beta: Matrix, factor_cov: Matrix, specific_var: Vec<f64>) -> Result<FactorRiskModel> {
    let p = factor_cov.rows();
    if factor_cov.cols() != p {
        return Err(Error::dim("factor_cov cols", p, factor_cov.cols()));
    }
    let mut sym = factor_cov;
    for a in 0..p {
        for b in 0..a {
            let v = 0.5 * (sym[(a, b)] + sym[(b, a)]);
            sym[(a, b)] = v;
            sym[(b, a)] = v;
        }
    }
    let (min_eig, max_eig) = extreme_eigenvalues(&sym);
    if min_eig < -1e-10 * max_eig.max(0.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
            max_eigenvalue: max_eig,
        });
    }
    FactorRiskModel::new(beta, sym, specific_var)
}

/// All estimation outputs for one window.
#[derive(Debug, Clone)]
pub struct RiskEstimate {
    pub model: FactorRiskModel,
    pub eligible: Vec<bool>,
    pub flagged: Vec<bool>,
}

pub fn estimate_risk_model(panel: &ReturnPanel, min_history: usize) -> Result<RiskEstimate> {
    let loadings = estimate_loadings(panel, min_history)?;
    let factor_cov = estimate_factor_cov(&panel.factor_returns)?;
    let specific = estimate_specific_variance(panel, &loadings.beta)?;
    let model = assemble_risk_model(loadings.beta, factor_cov, specific.variance)?;
    Ok(RiskEstimate {
        model,
        eligible: loadings.eligible,
        flagged: specific.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
        Matrix::from_row_major(rows, cols, data).unwrap()
    }

    #[test]
    fn recovers_unit_loading_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_matrix(&mut rng, 100, 3, 0.01);
        let r = Matrix::from_row_major(100, 1, f.col(0)).unwrap();
        let panel = ReturnPanel::full(r, f).unwrap();
        let l = estimate_loadings(&panel, 42).unwrap();
        assert!(l.eligible[0]);
        let b = l.beta.row(0);
        assert!(
            (b[0] - 1.0).abs() < 1e-8 && b[1].abs() < 1e-8 && b[2].abs() < 1e-8,
            "{b:?}"
        );
    }

    #[test]
    fn short_history_is_ineligible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_matrix(&mut rng, 60, 2, 0.01);
        let r = random_matrix(&mut rng, 60, 2, 0.02);
        let panel = ReturnPanel::new(r, f, vec![0, 50]).unwrap();
        let l = estimate_loadings(&panel, 42).unwrap();
        assert_eq!(l.eligible, vec![true, false]);
        assert_eq!(l.beta.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn min_history_must_exceed_factor_count() {
        let f = Matrix::zeros(10, 3);
        let panel = ReturnPanel::full(Matrix::zeros(10, 1), f).unwrap();
        assert!(estimate_loadings(&panel, 3).is_err());
    }

    #[test]
    fn duplicated_factor_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = random_matrix(&mut rng, 80, 2, 0.01);
        let mut rows = Vec::new();
        for k in 0..80 {
            rows.push(vec![base[(k, 0)], base[(k, 1)], base[(k, 1)]]);
        }
        let f = Matrix::from_rows(&rows).unwrap();
        let panel = ReturnPanel::full(random_matrix(&mut rng, 80, 1, 0.02), f).unwrap();
        assert_eq!(
            estimate_loadings(&panel, 42).unwrap_err(),
            Error::RankDeficient { factor: 2 }
        );
    }

    #[test]
    fn constant_factors_have_zero_covariance() {
        let f = Matrix::from_rows(&vec![vec![0.01, -0.02]; 30]).unwrap();
        let cov = estimate_factor_cov(&f).unwrap();
        assert!(cov.as_slice().iter().all(|v| v.abs() < 1e-18));
    }

    #[test]
    fn two_point_variance() {
        let f = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(estimate_factor_cov(&f).unwrap()[(0, 0)], 2.0);
        assert!(estimate_factor_cov(&Matrix::from_rows(&[vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn specific_variance_without_loadings_is_return_variance() {
        let r = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let f = Matrix::from_rows(&[vec![0.3], vec![-0.1]]).unwrap();
        let panel = ReturnPanel::full(r, f).unwrap();
        let d = estimate_specific_variance(&panel, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(d.variance, vec![2.0]);
        assert_eq!(d.flagged, vec![false]);
    }

    #[test]
    fn single_valid_row_is_flagged_at_floor() {
        let r = Matrix::from_rows(&[vec![f64::NAN], vec![0.5]]).unwrap();
        let f = Matrix::from_rows(&[vec![0.3], vec![-0.1]]).unwrap();
        let panel = ReturnPanel::new(r, f, vec![1]).unwrap();
        let d = estimate_specific_variance(&panel, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(d.variance, vec![SPECIFIC_VAR_FLOOR]);
        assert_eq!(d.flagged, vec![true]);
    }

    #[test]
    fn nan_inside_valid_range_is_rejected() {
        let r = Matrix::from_rows(&[vec![0.1], vec![f64::NAN]]).unwrap();
        let f = Matrix::from_rows(&[vec![0.3], vec![-0.1]]).unwrap();
        assert!(ReturnPanel::full(r, f).is_err());
    }

    #[test]
    fn assemble_zero_model() {
        let m = assemble_risk_model(Matrix::zeros(3, 2), Matrix::zeros(2, 2), vec![0.0; 3]).unwrap();
        assert_eq!(m.quad_form(&[1.0, -2.0, 0.5]), 0.0);
    }

    #[test]
    fn assemble_rank_one_quadratic_form() {
        let s2 = 0.04;
        let m = assemble_risk_model(
            Matrix::from_row_major(3, 1, vec![1.0; 3]).unwrap(),
            Matrix::from_rows(&[vec![s2]]).unwrap(),
            vec![0.0; 3],
        )
        .unwrap();
        let v = [0.3, -0.1, 0.5];
        let sum: f64 = v.iter().sum();
        assert!((m.quad_form(&v) - s2 * sum * sum).abs() < 1e-15);
    }

    #[test]
    fn assemble_symmetrizes_and_rejects_indefinite() {
        let slightly_asym = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.2 + 1e-9, 1.0]]).unwrap();
        let m = assemble_risk_model(Matrix::zeros(1, 2), slightly_asym, vec![0.0]).unwrap();
        assert_eq!(m.factor_cov()[(0, 1)], m.factor_cov()[(1, 0)]);
        let indefinite = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        match assemble_risk_model(Matrix::zeros(1, 2), indefinite, vec![0.0]) {
            Err(Error::NotPsd { min_eigenvalue, .. }) => assert!((min_eigenvalue + 2.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }
}
