//! Synthetic daily market panels.
//!
//! Stocks follow a linear factor model with Gaussian factor and idiosyncratic
//! returns. Volumes, bid/ask quotes and implied volatilities are layered on
//! top so that every input of instance construction has a source.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Days needed beyond the 60-day ADV window and the 5 forward alpha days.
pub const MIN_DAYS: usize = 71;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n: usize,
    pub days: usize,
    /// Number of factors.
    pub p: usize,
    pub missing_iv_fraction: f64,
    pub gmv: f64,
    pub exponent_d: f64,
    /// Exposure rows: the market-neutral row followed by up to `p` style rows.
    pub exposure_rows: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n: 200,
            days: 600,
            p: 6,
            missing_iv_fraction: 0.2,
            gmv: 1e8,
            exponent_d: 1.5,
            exposure_rows: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days < MIN_DAYS {
            return Err(Error::Invalid(format!(
                "days must exceed 70 (60-day ADV window plus 5 forward days), got {}",
                self.days
            )));
        }
        if self.n == 0 || self.p == 0 {
            return Err(Error::Invalid("n and p must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.missing_iv_fraction) {
            return Err(Error::Invalid(format!(
                "missing_iv_fraction must lie in [0, 1], got {}",
                self.missing_iv_fraction
            )));
        }
        if !(self.gmv > 0.0 && self.gmv.is_finite()) {
            return Err(Error::Invalid(format!("gmv must be positive, got {}", self.gmv)));
        }
        if !(self.exponent_d > 1.0 && self.exponent_d <= 2.0) {
            return Err(Error::Invalid(format!(
                "impact exponent must lie in (1, 2], got {}",
                self.exponent_d
            )));
        }
        if self.exposure_rows > self.p + 1 {
            return Err(Error::Invalid(format!(
                "at most p + 1 = {} exposure rows, got {}",
                self.p + 1,
                self.exposure_rows
            )));
        }
        Ok(())
    }
}

/// Matrix with missing entries, serialized with `null` markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseObservations {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Option<f64>>,
}

impl SparseObservations {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.data[i * self.cols + j]
    }
}

/// Daily closes, volumes, quotes, implied vols and factor returns.
///
/// Row `k` of `factor_returns` is the factor move from day `k` to day `k + 1`,
/// matching the stock return `(p_{k+1} − p_k)/p_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketPanel {
    pub dates: Vec<u32>,
    pub prices: Matrix,
    /// Shares per day.
    pub volumes: Matrix,
    pub bid: Matrix,
    pub ask: Matrix,
    /// Daily return volatility; `None` where no option data exists.
    pub implied_vol: SparseObservations,
    pub factor_returns: Matrix,
    /// Generative total daily volatility per stock.
    pub true_vol: Vec<f64>,
}

impl MarketPanel {
    pub fn days(&self) -> usize {
        self.prices.rows()
    }

    pub fn n(&self) -> usize {
        self.prices.cols()
    }

    pub fn num_factors(&self) -> usize {
        self.factor_returns.cols()
    }

    /// `(p_{k+1} − p_k)/p_k` for stock `i`.
    pub fn daily_return(&self, k: usize, i: usize) -> f64 {
        let p0 = self.prices[(k, i)];
        (self.prices[(k + 1, i)] - p0) / p0
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = (self.days(), self.n());
        if self.dates.len() != d {
            return Err(Error::dim("dates", d, self.dates.len()));
        }
        if self.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("dates must be strictly increasing".into()));
        }
        for (name, m) in [("volumes", &self.volumes), ("bid", &self.bid), ("ask", &self.ask)] {
            if m.rows() != d || m.cols() != n {
                return Err(Error::Invalid(format!(
                    "{name} has shape {}x{}, expected {d}x{n}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if self.implied_vol.rows != d || self.implied_vol.cols != n || self.implied_vol.data.len() != d * n {
            return Err(Error::Invalid("implied_vol shape mismatch".into()));
        }
        if self.factor_returns.rows() != d {
            return Err(Error::dim("factor return rows", d, self.factor_returns.rows()));
        }
        if self.true_vol.len() != n {
            return Err(Error::dim("true_vol", n, self.true_vol.len()));
        }
        if !self.prices.as_slice().iter().all(|p| *p > 0.0 && p.is_finite()) {
            return Err(Error::Invalid("prices must be positive".into()));
        }
        if !self.volumes.as_slice().iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid("volumes must be positive".into()));
        }
        for (b, a) in self.bid.as_slice().iter().zip(self.ask.as_slice()) {
            if !(*b > 0.0 && a >= b && a.is_finite()) {
                return Err(Error::Invalid(format!("invalid quote bid {b} ask {a}")));
            }
        }
        if self
            .implied_vol
            .data
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Invalid("implied vols must be finite and nonnegative".into()));
        }
        if !self.factor_returns.is_finite() {
            return Err(Error::NonFinite("factor returns"));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn gen_market_data(config: &GeneratorConfig) -> Result<MarketPanel> {
    config.validate()?;
    let GeneratorConfig { n, days, p, .. } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x6d61_726b));

    let factor_vol: Vec<f64> = (0..p).map(|_| rng.random_range(0.003..0.01)).collect();
    let mut beta = Matrix::zeros(n, p);
    for i in 0..n {
        beta[(i, 0)] = rng.random_range(0.5..1.5);
        for j in 1..p {
            beta[(i, j)] = rng.random_range(-0.6..0.6);
        }
    }
    let idio_vol: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.04)).collect();
    let true_vol: Vec<f64> = (0..n)
        .map(|i| {
            let systematic: f64 = (0..p).map(|j| (beta[(i, j)] * factor_vol[j]).powi(2)).sum();
            (systematic + idio_vol[i].powi(2)).sqrt()
        })
        .collect();
    let adv_shares: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(5.0..7.0))).collect();
    let half_spread: Vec<f64> = (0..n).map(|_| rng.random_range(2e-4..30e-4)).collect();

    let mut factor_returns = Matrix::zeros(days, p);
    for k in 0..days {
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            factor_returns[(k, j)] = factor_vol[j] * z;
        }
    }

    let mut prices = Matrix::zeros(days, n);
    prices.row_mut(0).iter_mut().for_each(|v| *v = 100.0);
    for k in 0..days - 1 {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let systematic = crate::linalg::dot(beta.row(i), factor_returns.row(k));
            let r = (systematic + idio_vol[i] * z).max(-0.5);
            prices[(k + 1, i)] = prices[(k, i)] * (1.0 + r);
        }
    }

    let volume_noise = LogNormal::new(0.0, 0.3).expect("valid lognormal");
    let spread_noise = LogNormal::new(0.0, 0.1).expect("valid lognormal");
    let iv_noise = LogNormal::new(0.0, 0.1).expect("valid lognormal");
    let mut volumes = Matrix::zeros(days, n);
    let mut bid = Matrix::zeros(days, n);
    let mut ask = Matrix::zeros(days, n);
    for k in 0..days {
        for i in 0..n {
            volumes[(k, i)] = adv_shares[i] * volume_noise.sample(&mut rng);
            let h = (half_spread[i] * spread_noise.sample(&mut rng)).clamp(2e-4, 30e-4);
            let close = prices[(k, i)];
            bid[(k, i)] = close * (1.0 - h);
            ask[(k, i)] = close * (1.0 + h);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let missing_count = (config.missing_iv_fraction * n as f64).round() as usize;
    let mut missing = vec![false; n];
    for &i in &order[..missing_count.min(n)] {
        missing[i] = true;
    }
    let mut iv = vec![None; days * n];
    for k in 0..days {
        for i in 0..n {
            let draw = iv_noise.sample(&mut rng);
            if !missing[i] {
                iv[k * n + i] = Some(true_vol[i] * draw);
            }
        }
    }

    let panel = MarketPanel {
        dates: (0..days as u32).collect(),
        prices,
        volumes,
        bid,
        ask,
        implied_vol: SparseObservations {
            rows: days,
            cols: n,
            data: iv,
        },
        factor_returns,
        true_vol,
    };
    panel.validate()?;
    Ok(panel)
}

/// Gaussian draw helper shared with alpha construction.
pub(crate) fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).map(|d| d.sample(rng)).unwrap_or(0.0)
}
