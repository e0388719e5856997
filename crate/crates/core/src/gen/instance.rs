//! Instance construction from a market panel: alpha, costs, risk model,
//! exposure bounds and the multi-period extension.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::market::{mix_seed, normal, GeneratorConfig, MarketPanel};
use crate::error::{Error, Result};
use crate::linalg::{norm1, Matrix};
use crate::model::{
    ExposureConstraints, FactorRiskModel, MultiPeriodData, MultiPeriodProblem, SinglePeriodData, SinglePeriodProblem,
};
use crate::risk::{estimate_risk_model, ReturnPanel, DEFAULT_MIN_HISTORY, DEFAULT_WINDOW};
use crate::solver::{solve_single, SolveOutcome, SolverConfig};

pub const ADV_WINDOW: usize = 60;
pub const ALPHA_HORIZON: usize = 5;
pub const ALPHA_NOISE_SCALE: f64 = 0.5;
pub const MARKET_BOUND: f64 = 0.05;
pub const STYLE_BOUND: f64 = 0.10;
pub const INITIAL_GROSS: f64 = 0.5;

/// Daily return vol for stock `i` at `date_index`: the implied vol when
/// present, otherwise the sample std of up to 504 trailing returns.
pub fn daily_vol(panel: &MarketPanel, date_index: usize, i: usize) -> Result<f64> {
    if date_index >= panel.days() {
        return Err(Error::Invalid(format!(
            "date_index {date_index} outside panel of {} days",
            panel.days()
        )));
    }
    if let Some(v) = panel.implied_vol.get(date_index, i) {
        return Ok(v);
    }
    let count = date_index.min(DEFAULT_WINDOW);
    if count < DEFAULT_MIN_HISTORY {
        return Err(Error::InsufficientData(format!(
            "stock {i}: {count} trailing returns for the vol fallback, need {DEFAULT_MIN_HISTORY}"
        )));
    }
    let r: Vec<f64> = (date_index - count..date_index)
        .map(|k| panel.daily_return(k, i))
        .collect();
    let mean = r.iter().sum::<f64>() / count as f64;
    let ss: f64 = r.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (count - 1) as f64).sqrt())
}

/// Mean of the next five daily returns plus `0.5·N(0, σ²)` noise.
pub fn build_alpha(panel: &MarketPanel, date_index: usize, seed: u64) -> Result<Vec<f64>> {
    if date_index + ALPHA_HORIZON >= panel.days() {
        return Err(Error::InsufficientData(format!(
            "date_index {date_index} needs {ALPHA_HORIZON} forward days in a panel of {}",
            panel.days()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, date_index as u64));
    (0..panel.n())
        .map(|i| {
            let forward: f64 = (date_index..date_index + ALPHA_HORIZON)
                .map(|k| panel.daily_return(k, i))
                .sum::<f64>()
                / ALPHA_HORIZON as f64;
            let sigma = daily_vol(panel, date_index, i)?;
            Ok(forward + ALPHA_NOISE_SCALE * normal(&mut rng, sigma))
        })
        .collect()
}

/// `q = σ·(gmv/ADV)^{d−1}`.
pub fn impact_coefficient(sigma: f64, gmv: f64, adv: f64, d: f64) -> Result<f64> {
    if !(adv > 0.0 && adv.is_finite()) {
        return Err(Error::Invalid(format!("ADV must be positive, got {adv}")));
    }
    Ok(sigma * (gmv / adv).powf(d - 1.0))
}

/// Relative half-spread and impact coefficients at `date_index`.
pub fn build_costs(panel: &MarketPanel, date_index: usize, gmv: f64, d: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if date_index < ADV_WINDOW || date_index >= panel.days() {
        return Err(Error::InsufficientData(format!(
            "date_index {date_index} needs {ADV_WINDOW} trailing days inside a panel of {}",
            panel.days()
        )));
    }
    let n = panel.n();
    let mut spread = Vec::with_capacity(n);
    let mut impact = Vec::with_capacity(n);
    for i in 0..n {
        let (bid, ask) = (panel.bid[(date_index, i)], panel.ask[(date_index, i)]);
        spread.push((ask - bid) / (ask + bid));
        let adv = (date_index - ADV_WINDOW..date_index)
            .map(|k| panel.volumes[(k, i)] * panel.prices[(k, i)])
            .sum::<f64>()
            / ADV_WINDOW as f64;
        let sigma = daily_vol(panel, date_index, i)?;
        impact.push(impact_coefficient(sigma, gmv, adv, d)?);
    }
    Ok((spread, impact))
}

/// Returns and factor returns over the trailing window ending before `date_index`.
pub fn return_window(panel: &MarketPanel, date_index: usize) -> Result<ReturnPanel> {
    let w = date_index.min(DEFAULT_WINDOW);
    let (n, p) = (panel.n(), panel.num_factors());
    let start = date_index - w;
    let mut stock = Matrix::zeros(w, n);
    let mut factor = Matrix::zeros(w, p);
    for (row, k) in (start..date_index).enumerate() {
        for i in 0..n {
            stock[(row, i)] = panel.daily_return(k, i);
        }
        factor.row_mut(row).copy_from_slice(panel.factor_returns.row(k));
    }
    ReturnPanel::full(stock, factor)
}

/// Market-neutral row (all ones, ±0.05) followed by style rows `βᵀ` (±0.10),
/// truncated to `config.exposure_rows`.
pub fn build_exposures(risk: &FactorRiskModel, config: &GeneratorConfig) -> Result<ExposureConstraints> {
    let (n, p) = (risk.n(), risk.num_factors());
    let m = config.exposure_rows.min(p + 1);
    let mut a = Matrix::zeros(m, n);
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for r in 0..m {
        if r == 0 {
            a.row_mut(0).iter_mut().for_each(|v| *v = 1.0);
            lower.push(-MARKET_BOUND);
            upper.push(MARKET_BOUND);
        } else {
            for i in 0..n {
                a[(r, i)] = risk.beta()[(i, r - 1)];
            }
            lower.push(-STYLE_BOUND);
            upper.push(STYLE_BOUND);
        }
    }
    ExposureConstraints::new(a, lower, upper)
}

/// Sparse random book on about a fifth of the names with `‖w₀‖₁ = 0.5`.
pub fn initial_book(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (n / 5).max(1);
    let mut w = vec![0.0; n];
    for i in sample(&mut rng, n, k) {
        let size: f64 = rng.random_range(0.5..1.5);
        w[i] = if rng.random_bool(0.5) { size } else { -size };
    }
    let scale = INITIAL_GROSS / norm1(&w);
    w.iter_mut().for_each(|v| *v *= scale);
    w
}

pub fn build_single_instance(
    panel: &MarketPanel,
    date_index: usize,
    lambdas: (f64, f64, f64),
    config: &GeneratorConfig,
) -> Result<SinglePeriodProblem> {
    config.validate()?;
    if panel.n() != config.n {
        return Err(Error::dim("panel assets", config.n, panel.n()));
    }
    if date_index < ADV_WINDOW || date_index + ALPHA_HORIZON >= panel.days() {
        return Err(Error::InsufficientData(format!(
            "date_index {date_index} needs {ADV_WINDOW} trailing and {ALPHA_HORIZON} forward days in a panel of {}",
            panel.days()
        )));
    }
    let estimate = estimate_risk_model(&return_window(panel, date_index)?, DEFAULT_MIN_HISTORY)?;
    let alpha = build_alpha(panel, date_index, mix_seed(config.seed, 0x616c_7068))?;
    let (spread, impact) = build_costs(panel, date_index, config.gmv, config.exponent_d)?;
    let exposures = build_exposures(&estimate.model, config)?;
    let w0 = initial_book(panel.n(), mix_seed(config.seed, 0x7730_0000 ^ date_index as u64));
    let (lambda1, lambda2, lambda3) = lambdas;
    SinglePeriodProblem::new(SinglePeriodData {
        gmv: config.gmv,
        alpha,
        risk: estimate.model,
        spread,
        impact,
        exponent: config.exponent_d,
        lambda1,
        lambda2,
        lambda3,
        exposures,
        w0,
    })
}

/// U-shaped liquidity profile `η(t) = 0.5 + 2(t/T − 0.5)²`.
pub fn u_shape(t: f64, horizon: usize) -> f64 {
    let x = t / horizon as f64 - 0.5;
    0.5 + 2.0 * x * x
}

/// Per-period cost multipliers `η_t / Σ_{k=1}^{T−1} η_k` for `t = 1..T`.
pub fn cost_profile(horizon: usize) -> Result<Vec<f64>> {
    if horizon < 2 {
        return Err(Error::Invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    let total: f64 = (1..horizon).map(|k| u_shape(k as f64, horizon)).sum();
    Ok((1..=horizon).map(|t| u_shape(t as f64, horizon) / total).collect())
}

/// Spreads the single-period costs over `horizon` periods with the U-shaped
/// profile, keeping alpha constant and ending at `w_terminal`.
pub fn extend_multi(single: &SinglePeriodProblem, horizon: usize, w_terminal: &[f64]) -> Result<MultiPeriodProblem> {
    let profile = cost_profile(horizon)?;
    let n = single.n();
    if w_terminal.len() != n {
        return Err(Error::dim("w_terminal", n, w_terminal.len()));
    }
    let mut alpha_t = Matrix::zeros(horizon, n);
    let mut spread_t = Matrix::zeros(horizon, n);
    let mut impact_t = Matrix::zeros(horizon, n);
    for (row, scale) in profile.iter().enumerate() {
        alpha_t.row_mut(row).copy_from_slice(single.alpha());
        for i in 0..n {
            spread_t[(row, i)] = scale * single.spread()[i];
            impact_t[(row, i)] = scale * single.impact()[i];
        }
    }
    let (lambda1, lambda2, lambda3) = single.lambdas();
    MultiPeriodProblem::new(MultiPeriodData {
        horizon,
        gmv: single.gmv(),
        alpha_t,
        risk: single.risk().clone(),
        spread_t,
        impact_t,
        exponent: single.exponent(),
        lambda1,
        lambda2,
        lambda3,
        exposures: single.exposures().clone(),
        w0: single.w0().to_vec(),
        w_terminal: w_terminal.to_vec(),
    })
}

/// Scales `w` toward the origin until it satisfies the budget and exposure
/// bounds exactly. Requires the origin to be strictly inside every slab.
pub fn shrink_to_feasible(w: &[f64], exposures: &ExposureConstraints) -> Option<Vec<f64>> {
    let mut theta: f64 = 1.0;
    let gross = norm1(w);
    if gross > 1.0 {
        theta = theta.min(1.0 / gross);
    }
    let aw = exposures.matrix().matvec(w);
    for ((v, lo), hi) in aw.iter().zip(exposures.lower()).zip(exposures.upper()) {
        if *v > *hi {
            if *hi <= 0.0 {
                return None;
            }
            theta = theta.min(hi / v);
        } else if *v < *lo {
            if *lo >= 0.0 {
                return None;
            }
            theta = theta.min(lo / v);
        }
    }
    if theta < 1.0 {
        // Back off a few ulps so rounding in A·(θw) cannot re-cross a bound.
        theta *= 1.0 - 1e-12;
    }
    Some(w.iter().map(|v| v * theta).collect())
}

/// Multi-period extension targeting the solved single-period optimum.
pub fn extend_multi_to_optimum(
    single: &SinglePeriodProblem,
    horizon: usize,
    solver: &SolverConfig,
) -> Result<(MultiPeriodProblem, SolveOutcome)> {
    let outcome = solve_single(single, solver)?;
    let target = match &outcome.decision {
        crate::model::Decision::Weights(w) => w.clone(),
        crate::model::Decision::Trajectory(_) => unreachable!("single-period solve returns weights"),
    };
    let target = shrink_to_feasible(&target, single.exposures())
        .ok_or_else(|| Error::Invalid("single-period optimum cannot be made feasible".into()))?;
    Ok((extend_multi(single, horizon, &target)?, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::market::{gen_market_data, SparseObservations};

    fn flat_panel(days: usize, n: usize, growth: f64, iv: Option<f64>) -> MarketPanel {
        let mut prices = Matrix::zeros(days, n);
        for k in 0..days {
            for i in 0..n {
                prices[(k, i)] = if k == 0 {
                    100.0
                } else {
                    prices[(k - 1, i)] * (1.0 + growth)
                };
            }
        }
        let mut bid = Matrix::zeros(days, n);
        let mut ask = Matrix::zeros(days, n);
        for k in 0..days {
            for i in 0..n {
                bid[(k, i)] = prices[(k, i)] * 0.99;
                ask[(k, i)] = prices[(k, i)] * 1.01;
            }
        }
        MarketPanel {
            dates: (0..days as u32).collect(),
            volumes: Matrix::from_row_major(days, n, vec![1e5; days * n]).unwrap(),
            prices,
            bid,
            ask,
            implied_vol: SparseObservations {
                rows: days,
                cols: n,
                data: vec![iv; days * n],
            },
            factor_returns: Matrix::zeros(days, 1),
            true_vol: vec![0.0; n],
        }
    }

    #[test]
    fn constant_prices_zero_noise_give_zero_alpha() {
        let panel = flat_panel(80, 3, 0.0, Some(0.0));
        assert_eq!(build_alpha(&panel, 60, 1).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn constant_growth_gives_growth_alpha() {
        let panel = flat_panel(80, 2, 0.01, Some(0.0));
        for a in build_alpha(&panel, 10, 9).unwrap() {
            assert!((a - 0.01).abs() < 1e-15, "{a}");
        }
    }

    #[test]
    fn alpha_needs_forward_days() {
        let panel = flat_panel(80, 2, 0.0, Some(0.0));
        assert!(build_alpha(&panel, 74, 0).is_ok());
        assert!(build_alpha(&panel, 75, 0).is_err());
    }

    #[test]
    fn spread_is_half_spread_over_mid() {
        let mut panel = flat_panel(80, 1, 0.0, Some(0.02));
        panel.bid[(60, 0)] = 99.0;
        panel.ask[(60, 0)] = 101.0;
        let (s, _) = build_costs(&panel, 60, 1e8, 1.5).unwrap();
        assert_eq!(s[0], 0.01);
    }

    #[test]
    fn impact_formula() {
        let q = impact_coefficient(0.02, 10.0, 1.0, 1.5).unwrap();
        assert!((q - 0.02 * 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(impact_coefficient(0.02, 1e8, 3.0, 1.0).unwrap(), 0.02);
        assert!(impact_coefficient(0.02, 1e8, 0.0, 1.5).is_err());
    }

    #[test]
    fn costs_need_adv_window() {
        let panel = flat_panel(80, 1, 0.0, Some(0.02));
        assert!(build_costs(&panel, 59, 1e8, 1.5).is_err());
        let (_, q) = build_costs(&panel, 60, 1e7, 1.5).unwrap();
        // ADV = 1e5 shares at 100 = 1e7 currency.
        assert!((q[0] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn vol_fallback_uses_trailing_returns() {
        let mut panel = flat_panel(80, 1, 0.0, None);
        for k in 1..80 {
            panel.prices[(k, 0)] = if k % 2 == 0 { 100.0 } else { 101.0 };
        }
        assert!(daily_vol(&panel, 41, 0).is_err());
        let v = daily_vol(&panel, 60, 0).unwrap();
        let r: Vec<f64> = (0..60).map(|k| panel.daily_return(k, 0)).collect();
        let m = r.iter().sum::<f64>() / 60.0;
        let want = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 59.0).sqrt();
        assert!((v - want).abs() < 1e-15);
    }

    #[test]
    fn exposures_from_identity_loadings() {
        let beta = Matrix::identity(3);
        let risk = FactorRiskModel::new(beta, Matrix::identity(3), vec![0.1; 3]).unwrap();
        let config = GeneratorConfig {
            p: 3,
            exposure_rows: 4,
            ..GeneratorConfig::default()
        };
        let ex = build_exposures(&risk, &config).unwrap();
        assert_eq!(ex.max_violation(&[0.0; 3]), 0.0);
        // e₁ has style exposure 1, far outside ±0.10.
        assert!((ex.max_violation(&[1.0, 0.0, 0.0]) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn profile_endpoints_and_normalization() {
        for horizon in [2usize, 3, 10] {
            assert_eq!(u_shape(0.0, horizon), 1.0);
            assert_eq!(u_shape(horizon as f64 / 2.0, horizon), 0.5);
            assert_eq!(u_shape(horizon as f64, horizon), 1.0);
            let profile = cost_profile(horizon).unwrap();
            let head: f64 = profile[..horizon - 1].iter().sum();
            assert!((head - 1.0).abs() < 1e-12);
        }
        assert!(cost_profile(1).is_err());
    }

    #[test]
    fn initial_book_gross_and_sparsity() {
        for seed in 0..20 {
            let w = initial_book(50, seed);
            assert!((norm1(&w) - 0.5).abs() < 1e-12);
            assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 10);
        }
        assert_eq!(initial_book(50, 3), initial_book(50, 3));
    }

    #[test]
    fn shrink_restores_feasibility() {
        let ex =
            ExposureConstraints::new(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(), vec![-0.05], vec![0.05]).unwrap();
        let w = shrink_to_feasible(&[0.7, 0.4], &ex).unwrap();
        assert!(ex.max_violation(&w) == 0.0 && norm1(&w) <= 1.0);
        let pinned =
            ExposureConstraints::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![0.1], vec![0.2]).unwrap();
        assert!(shrink_to_feasible(&[0.0, 0.5], &pinned).is_none());
    }

    #[test]
    fn single_instance_is_deterministic() {
        let config = GeneratorConfig {
            seed: 11,
            n: 8,
            days: 120,
            p: 2,
            exposure_rows: 3,
            ..GeneratorConfig::default()
        };
        let panel = gen_market_data(&config).unwrap();
        let a = build_single_instance(&panel, 100, (1e-6, 10.0, 10.0), &config).unwrap();
        let b = build_single_instance(&panel, 100, (1e-6, 10.0, 10.0), &config).unwrap();
        assert_eq!(a, b);
        assert!(a.spread().iter().all(|s| *s > 0.0));
        assert!(a.impact().iter().all(|q| *q > 0.0));
        assert!((norm1(a.w0()) - 0.5).abs() < 1e-12);
        assert_eq!(a.exposures().rows(), 3);
    }

    #[test]
    fn multi_extension_scales_costs_together() {
        let config = GeneratorConfig {
            seed: 2,
            n: 6,
            days: 100,
            p: 2,
            exposure_rows: 3,
            ..GeneratorConfig::default()
        };
        let panel = gen_market_data(&config).unwrap();
        let single = build_single_instance(&panel, 80, (1e-6, 1.0, 1.0), &config).unwrap();
        let multi = extend_multi(&single, 10, &[0.0; 6]).unwrap();
        let mut sum = [0.0; 6];
        for t in 1..=10 {
            for i in 0..6 {
                let ratio = multi.spread(t)[i] / multi.impact(t)[i];
                let base = single.spread()[i] / single.impact()[i];
                assert!((ratio - base).abs() <= 1e-12 * base);
                if t < 10 {
                    sum[i] += multi.spread(t)[i];
                }
            }
            assert_eq!(multi.alpha(t), single.alpha());
        }
        for i in 0..6 {
            assert!((sum[i] - single.spread()[i]).abs() <= 1e-12);
        }
        let mut bad = vec![0.0; 6];
        bad[0] = 2.0;
        assert!(extend_multi(&single, 10, &bad).is_err());
    }
}
