//! Synthetic returns with planted correlation regimes.
//!
//! Each regime draws from a one-factor Gaussian model
//! `r_i(t) = σ·(√c·m(t) + √(1−c)·e_i(t))`, whose population correlation
//! between any two stocks is exactly `c`.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlation::ReturnTable;
use crate::error::{Error, Result};
use crate::ingest::{Instrument, PriceTable};

/// Identifies the random stream so outputs can be reproduced elsewhere.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64) + StandardNormal ziggurat (rand_distr 0.5); draw order per day: m, e_1..e_N";

pub const START_PRICE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub duration_days: usize,
    pub base_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub n_stocks: usize,
    pub regimes: Vec<Regime>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_stocks < 2 {
            return Err(Error::InvalidParameter("n_stocks must be >= 2".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidParameter("at least one regime is required".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_sigma must be > 0, got {}", self.noise_sigma)));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.duration_days == 0 {
                return Err(Error::InvalidParameter(format!("regime {i} has zero duration")));
            }
            if !(0.0..1.0).contains(&r.base_correlation) {
                return Err(Error::InvalidParameter(format!(
                    "regime {i} correlation {} outside [0, 1)",
                    r.base_correlation
                )));
            }
            if self.regimes[..i].iter().any(|o| o.base_correlation == r.base_correlation) {
                return Err(Error::InvalidParameter(format!(
                    "regime {i} repeats correlation {}",
                    r.base_correlation
                )));
            }
        }
        Ok(())
    }

    /// Additionally requires every regime to span at least one epoch.
    pub fn validate_for_epoch(&self, epoch_len: usize) -> Result<()> {
        self.validate()?;
        if let Some(i) = self.regimes.iter().position(|r| r.duration_days < epoch_len) {
            return Err(Error::InvalidParameter(format!("regime {i} is shorter than the epoch ({epoch_len} days)")));
        }
        Ok(())
    }

    pub fn total_days(&self) -> usize {
        self.regimes.iter().map(|r| r.duration_days).sum()
    }

    /// Regime index (0-based) of every return day.
    pub fn regime_of_day(&self) -> Vec<usize> {
        self.regimes
            .iter()
            .enumerate()
            .flat_map(|(i, r)| std::iter::repeat_n(i, r.duration_days))
            .collect()
    }
}

/// Monday–Friday calendar starting at the first weekday on or after `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn calendar_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

pub fn tickers(n: usize) -> Vec<Instrument> {
    (0..n).map(|i| Instrument::bare(format!("SYN{i:03}"))).collect()
}

pub fn generate_returns(spec: &RegimeSpec) -> Result<ReturnTable> {
    spec.validate()?;
    let n = spec.n_stocks;
    let days = spec.total_days();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_day = Vec::with_capacity(days * n);
    for regime in &spec.regimes {
        let (a, b) = (regime.base_correlation.sqrt(), (1.0 - regime.base_correlation).sqrt());
        for _ in 0..regime.duration_days {
            let m: f64 = StandardNormal.sample(&mut rng);
            for _ in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                by_day.push(spec.noise_sigma * (a * m + b * e));
            }
        }
    }
    let mut returns = vec![0.0; n * days];
    for t in 0..days {
        for i in 0..n {
            returns[i * days + t] = by_day[t * n + i];
        }
    }
    // one leading calendar day is reserved for the starting price
    let dates = business_days(calendar_start(), days + 1).split_off(1);
    ReturnTable::new(tickers(n), dates, returns)
}

/// Prices `START_PRICE·exp(cumsum(r))`, with one extra leading date holding
/// the starting price.
pub fn to_prices(returns: &ReturnTable) -> Result<PriceTable> {
    let t = returns.n_dates();
    let first = returns.dates()[0];
    let lead = (1..=7)
        .map(|k| first - Days::new(k))
        .find(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .expect("a weekday within a week");
    let mut dates = vec![lead];
    dates.extend_from_slice(returns.dates());
    let mut prices = Vec::with_capacity(returns.n_instruments() * (t + 1));
    for i in 0..returns.n_instruments() {
        let mut log_p = START_PRICE.ln();
        prices.push(START_PRICE);
        for &r in returns.series(i) {
            log_p += r;
            prices.push(log_p.exp());
        }
    }
    PriceTable::new(returns.instruments().to_vec(), dates, prices)
}
