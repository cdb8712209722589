//! Log-returns, sliding-epoch Pearson correlation frames and the power map.

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{check_increasing, Instrument, PriceTable};

/// Default epoch length in return observations.
pub const DEFAULT_EPOCH_LEN: usize = 20;
/// Overshoot beyond ±1 that is silently clamped; anything larger is a bug.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// N×(T−1) log-returns, each stamped with the later of its two price dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    instruments: Vec<Instrument>,
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnTable {
    pub fn new(instruments: Vec<Instrument>, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if instruments.len() < 2 {
            return Err(Error::TooFewInstruments(instruments.len()));
        }
        if dates.is_empty() {
            return Err(Error::NoTradingDates);
        }
        if returns.len() != instruments.len() * dates.len() {
            return Err(Error::Misaligned {
                expected: instruments.len() * dates.len(),
                found: returns.len(),
            });
        }
        check_increasing(&dates)?;
        if let Some(pos) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite return for {}",
                instruments[pos / dates.len()].ticker
            )));
        }
        Ok(ReturnTable {
            instruments,
            dates,
            returns,
        })
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn series(&self, i: usize) -> &[f64] {
        let t = self.dates.len();
        &self.returns[i * t..(i + 1) * t]
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.returns[i * self.dates.len() + t]
    }

    /// Keeps the trailing `len` return columns.
    pub fn tail(&self, len: usize) -> Result<ReturnTable> {
        let t = self.n_dates();
        if len > t {
            return Err(Error::InsufficientHistory {
                needed: len,
                available: t,
            });
        }
        let returns = (0..self.n_instruments())
            .flat_map(|i| self.series(i)[t - len..].iter().copied())
            .collect();
        ReturnTable::new(self.instruments.clone(), self.dates[t - len..].to_vec(), returns)
    }
}

pub fn log_returns(prices: &PriceTable) -> ReturnTable {
    let n = prices.n_instruments();
    let t = prices.n_dates();
    let mut returns = Vec::with_capacity(n * (t - 1));
    for i in 0..n {
        let s = prices.series(i);
        returns.extend(s.windows(2).map(|w| (w[1] / w[0]).ln()));
    }
    ReturnTable {
        instruments: prices.instruments().to_vec(),
        dates: prices.dates()[1..].to_vec(),
        returns,
    }
}

/// One epoch's correlation matrix. Only the strict upper triangle is stored;
/// the diagonal is identically one and the lower triangle mirrors the upper.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFrame {
    pub tau: NaiveDate,
    pub epoch_len: usize,
    pub epsilon: f64,
    n: usize,
    upper: Vec<f64>,
}

pub(crate) fn triangle_len(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

impl CorrelationFrame {
    /// Builds a frame from packed strict-upper-triangle entries (row-major, `i < j`).
    pub fn from_upper(tau: NaiveDate, epoch_len: usize, epsilon: f64, n: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != triangle_len(n) {
            return Err(Error::DimensionMismatch {
                expected: triangle_len(n),
                found: upper.len(),
            });
        }
        if let Some(v) = upper.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Numerical(format!("correlation entry {v} outside [-1, 1]")));
        }
        Ok(CorrelationFrame {
            tau,
            epoch_len,
            epsilon,
            n,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 1.0,
            Less => self.upper[upper_index(self.n, i, j)],
            Greater => self.upper[upper_index(self.n, j, i)],
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Mean of the off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.upper.is_empty() {
            return 0.0;
        }
        self.upper.iter().sum::<f64>() / self.upper.len() as f64
    }
}

#[inline]
pub(crate) fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Pearson correlation of the `epoch_len` return columns ending at `tau`.
pub fn epoch_correlation(returns: &ReturnTable, tau: NaiveDate, epoch_len: usize) -> Result<CorrelationFrame> {
    let end = returns
        .dates
        .binary_search(&tau)
        .map_err(|_| Error::InvalidParameter(format!("no return column dated {tau}")))?;
    if end + 1 < epoch_len {
        return Err(Error::InsufficientHistory {
            needed: epoch_len,
            available: end + 1,
        });
    }
    correlation_at(returns, end + 1 - epoch_len, epoch_len)
}

/// Correlation over return columns `start..start + epoch_len`.
pub(crate) fn correlation_at(returns: &ReturnTable, start: usize, epoch_len: usize) -> Result<CorrelationFrame> {
    if epoch_len < 2 {
        return Err(Error::InvalidParameter(format!("epoch_len must be >= 2, got {epoch_len}")));
    }
    let n = returns.n_instruments();
    let tau = returns.dates[start + epoch_len - 1];

    // Centered, unit-norm window per stock; ρ_ij is then a plain dot product.
    let mut z = vec![0.0; n * epoch_len];
    for i in 0..n {
        let window = &returns.series(i)[start..start + epoch_len];
        let first = window[0];
        if window.iter().all(|&r| r == first) {
            return Err(Error::ZeroVariance {
                ticker: returns.instruments[i].ticker.clone(),
                tau,
            });
        }
        let mean = window.iter().sum::<f64>() / epoch_len as f64;
        let row = &mut z[i * epoch_len..(i + 1) * epoch_len];
        for (dst, &r) in row.iter_mut().zip(window) {
            *dst = r - mean;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVariance {
                ticker: returns.instruments[i].ticker.clone(),
                tau,
            });
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }

    let mut upper = Vec::with_capacity(triangle_len(n));
    for i in 0..n {
        let zi = &z[i * epoch_len..(i + 1) * epoch_len];
        for j in i + 1..n {
            let zj = &z[j * epoch_len..(j + 1) * epoch_len];
            let rho: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
            upper.push(clamp_unit(rho)?);
        }
    }
    Ok(CorrelationFrame {
        tau,
        epoch_len,
        epsilon: 0.0,
        n,
        upper,
    })
}

fn clamp_unit(rho: f64) -> Result<f64> {
    if rho.abs() > 1.0 + CLAMP_TOLERANCE || rho.is_nan() {
        return Err(Error::Numerical(format!("correlation {rho} beyond clamp tolerance")));
    }
    Ok(rho.clamp(-1.0, 1.0))
}

pub fn validate_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// `sign(x)·|x|^(1+ε)` for a single coefficient.
#[inline]
pub fn power_map_scalar(rho: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return rho;
    }
    rho.signum() * rho.abs().powf(1.0 + epsilon)
}

/// Elementwise power map of a raw frame.
pub fn power_map(frame: &CorrelationFrame, epsilon: f64) -> Result<CorrelationFrame> {
    validate_epsilon(epsilon)?;
    if frame.epsilon != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "power map expects a raw frame, got epsilon = {}",
            frame.epsilon
        )));
    }
    let upper = if epsilon == 0.0 {
        frame.upper.clone()
    } else {
        frame.upper.iter().map(|&r| power_map_scalar(r, epsilon)).collect()
    };
    Ok(CorrelationFrame {
        epsilon,
        upper,
        ..frame.clone()
    })
}

/// Ordered frames sharing epoch length, shift and ε.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub epoch_len: usize,
    pub shift: usize,
    pub epsilon: f64,
    frames: Vec<CorrelationFrame>,
}

/// `floor((n_returns − epoch_len) / shift) + 1`, or 0 when no epoch fits.
pub fn frame_count(n_returns: usize, epoch_len: usize, shift: usize) -> usize {
    if shift == 0 || epoch_len == 0 || n_returns < epoch_len {
        return 0;
    }
    (n_returns - epoch_len) / shift + 1
}

impl FrameSet {
    pub fn new(epoch_len: usize, shift: usize, epsilon: f64, frames: Vec<CorrelationFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidParameter("frame set is empty".into()));
        }
        let n = frames[0].n;
        for (idx, f) in frames.iter().enumerate() {
            if f.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: f.n,
                });
            }
            if f.epsilon != epsilon || f.epoch_len != epoch_len {
                return Err(Error::InvalidParameter(format!("frame {idx} has mismatched epoch_len or epsilon")));
            }
        }
        if let Some(pos) = frames.windows(2).position(|w| w[0].tau >= w[1].tau) {
            return Err(Error::NonIncreasingDates(pos + 1));
        }
        Ok(FrameSet {
            epoch_len,
            shift,
            epsilon,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].n
    }

    pub fn frames(&self) -> &[CorrelationFrame] {
        &self.frames
    }

    pub fn taus(&self) -> Vec<NaiveDate> {
        self.frames.iter().map(|f| f.tau).collect()
    }

    /// Power-maps every frame of a raw set.
    pub fn power_mapped(&self, epsilon: f64) -> Result<FrameSet> {
        let frames = self
            .frames
            .par_iter()
            .map(|f| power_map(f, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameSet {
            epsilon,
            frames,
            ..*self
        })
    }

    pub fn mean_correlations(&self) -> Vec<f64> {
        self.frames.iter().map(CorrelationFrame::mean_off_diagonal).collect()
    }
}

/// Builds every epoch frame, starting from the first return column and
/// advancing by `shift`.
pub fn build_frames(returns: &ReturnTable, epoch_len: usize, shift: usize, epsilon: f64) -> Result<FrameSet> {
    if epoch_len < 2 {
        return Err(Error::InvalidParameter(format!("epoch_len must be >= 2, got {epoch_len}")));
    }
    if shift < 1 {
        return Err(Error::InvalidParameter("shift must be >= 1".into()));
    }
    validate_epsilon(epsilon)?;
    let count = frame_count(returns.n_dates(), epoch_len, shift);
    if count == 0 {
        return Err(Error::InsufficientHistory {
            needed: epoch_len,
            available: returns.n_dates(),
        });
    }
    let frames = (0..count)
        .into_par_iter()
        .map(|f| correlation_at(returns, f * shift, epoch_len).and_then(|raw| power_map(&raw, epsilon)))
        .collect::<Result<Vec<_>>>()?;
    FrameSet::new(epoch_len, shift, epsilon, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|k| base + chrono::Days::new(k as u64)).collect()
    }

    fn table(series: &[Vec<f64>]) -> ReturnTable {
        let instruments = (0..series.len()).map(|i| Instrument::bare(format!("S{i}"))).collect();
        ReturnTable::new(instruments, dates(series[0].len()), series.concat()).unwrap()
    }

    fn random_series(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..t).map(|_| rng.random_range(-0.05..0.05)).collect()).collect()
    }

    /// Textbook Pearson: moments accumulated term by term.
    fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..x.len() {
            sx += x[k];
            sy += y[k];
            sxy += x[k] * y[k];
            sxx += x[k] * x[k];
            syy += y[k] * y[k];
        }
        let (mx, my) = (sx / n, sy / n);
        (sxy / n - mx * my) / ((sxx / n - mx * mx) * (syy / n - my * my)).sqrt()
    }

    #[test]
    fn log_return_examples() {
        let d = dates(2);
        let prices = PriceTable::new(
            vec![Instrument::bare("A"), Instrument::bare("B")],
            d.clone(),
            vec![100.0, 100.0, 100.0, 110.0],
        )
        .unwrap();
        let r = log_returns(&prices);
        assert_eq!(r.n_dates(), 1);
        assert_eq!(r.dates()[0], d[1]);
        assert_eq!(r.get(0, 0), 0.0);
        assert!((r.get(1, 0) - 0.09531017980432493).abs() < 1e-15);
    }

    #[test]
    fn perfect_correlation_and_anticorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_series(&mut rng, 1, 20).remove(0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let t = table(&[x.clone(), x.clone(), neg]);
        let f = epoch_correlation(&t, t.dates()[19], 20).unwrap();
        assert_eq!(f.get(0, 1), 1.0);
        assert_eq!(f.get(0, 2), -1.0);
        assert_eq!(f.get(2, 2), 1.0);
    }

    #[test]
    fn matches_brute_force_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_series(&mut rng, 3, 20);
        let t = table(&s);
        let f = epoch_correlation(&t, t.dates()[19], 20).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { brute_pearson(&s[i], &s[j]) };
                assert!((f.get(i, j) - want).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_variance_and_short_history_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_series(&mut rng, 2, 25);
        s[1] = vec![0.0; 25];
        let t = table(&s);
        match epoch_correlation(&t, t.dates()[21], 20) {
            Err(Error::ZeroVariance { ticker, tau }) => {
                assert_eq!(ticker, "S1");
                assert_eq!(tau, t.dates()[21]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let s = random_series(&mut rng, 2, 25);
        let t = table(&s);
        assert!(matches!(
            epoch_correlation(&t, t.dates()[10], 20),
            Err(Error::InsufficientHistory { needed: 20, available: 11 })
        ));
    }

    #[test]
    fn power_map_examples() {
        assert_eq!(power_map_scalar(0.5, 0.0), 0.5);
        assert!((power_map_scalar(0.5, 0.9) - 0.267_943_365_634_073_3).abs() < 1e-12);
        assert!((power_map_scalar(-0.5, 0.9) + 0.267_943_365_634_073_3).abs() < 1e-12);
        assert!((power_map_scalar(0.5, 0.999_999) - 0.25).abs() < 1e-6);
        for fixed in [-1.0, 0.0, 1.0] {
            assert_eq!(power_map_scalar(fixed, 0.7), fixed);
        }
    }

    #[test]
    fn power_map_rejects_bad_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = table(&random_series(&mut rng, 3, 20));
        let f = epoch_correlation(&t, t.dates()[19], 20).unwrap();
        for eps in [-0.1, 1.0, 1.5, f64::NAN] {
            assert!(matches!(power_map(&f, eps), Err(Error::InvalidEpsilon(_))));
        }
        let same = power_map(&f, 0.0).unwrap();
        assert_eq!(same, f);
        let mapped = power_map(&f, 0.5).unwrap();
        assert!(power_map(&mapped, 0.5).is_err());
    }

    #[test]
    fn frame_count_matches_loop_oracle() {
        for n_ret in 0..60 {
            for epoch in 2..12 {
                for shift in 1..8 {
                    let mut count = 0;
                    let mut start = 0;
                    while start + epoch <= n_ret {
                        count += 1;
                        start += shift;
                    }
                    assert_eq!(frame_count(n_ret, epoch, shift), count);
                }
            }
        }
        assert_eq!(frame_count(3522, 20, 1), 3503);
        assert_eq!(frame_count(3458, 20, 1), 3439);
        assert_eq!(frame_count(3522, 20, 10), 351);
        assert_eq!(frame_count(3458, 20, 10), 344);
    }

    #[test]
    fn build_frames_stamps_epoch_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = table(&random_series(&mut rng, 4, 45));
        let fs = build_frames(&t, 20, 5, 0.3).unwrap();
        assert_eq!(fs.len(), 6);
        assert_eq!(fs.frames()[0].tau, t.dates()[19]);
        assert_eq!(fs.frames()[1].tau, t.dates()[24]);
        let direct = power_map(&epoch_correlation(&t, t.dates()[24], 20).unwrap(), 0.3).unwrap();
        assert_eq!(fs.frames()[1], direct);
        assert!(build_frames(&t, 1, 1, 0.0).is_err());
        assert!(build_frames(&t, 20, 0, 0.0).is_err());
        assert!(build_frames(&t, 50, 1, 0.0).is_err());
    }

    #[test]
    fn affine_rescaling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = random_series(&mut rng, 4, 20);
        let mut s2 = s.clone();
        s2[2] = s2[2].iter().map(|v| 3.5 * v + 0.2).collect();
        let a = epoch_correlation(&table(&s), dates(20)[19], 20).unwrap();
        let b = epoch_correlation(&table(&s2), dates(20)[19], 20).unwrap();
        for (x, y) in a.upper().iter().zip(b.upper()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_index_is_row_major() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(upper_index(n, i, j), k);
                k += 1;
            }
        }
    }
}
