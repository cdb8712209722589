use std::sync::atomic::{AtomicU64, Ordering};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::correlation::{triangle_len, CorrelationFrame, FrameSet};
use crate::error::{Error, Result};

/// Mean absolute elementwise difference between two correlation frames,
/// averaged over all N² components (the diagonal contributes zero).
pub fn frame_distance(a: &CorrelationFrame, b: &CorrelationFrame) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(zeta_unchecked(a.upper(), b.upper(), a.dim()))
}

#[inline]
pub(crate) fn zeta_unchecked(a: &[f64], b: &[f64], n: usize) -> f64 {
    2.0 * abs_diff_sum(a, b) / (n * n) as f64
}

/// Σ|a_k − b_k| with eight independent accumulators so the loop vectorizes.
/// The reduction order is fixed, so results do not depend on threading.
#[inline]
fn abs_diff_sum(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += (x[k] - y[k]).abs();
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y).abs();
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Symmetric F×F matrix of frame distances with zero diagonal. Stores the
/// strict upper triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDistanceMatrix {
    size: usize,
    upper: Vec<f64>,
    taus: Vec<NaiveDate>,
}

impl FrameDistanceMatrix {
    pub fn from_upper(size: usize, upper: Vec<f64>, taus: Vec<NaiveDate>) -> Result<Self> {
        if upper.len() != triangle_len(size) {
            return Err(Error::DimensionMismatch {
                expected: triangle_len(size),
                found: upper.len(),
            });
        }
        if taus.len() != size {
            return Err(Error::Misaligned {
                expected: size,
                found: taus.len(),
            });
        }
        if let Some(v) = upper.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidDistances(format!("entry {v} is negative or non-finite")));
        }
        Ok(FrameDistanceMatrix { size, upper, taus })
    }

    /// Builds from a dense square matrix, checking symmetry and the zero diagonal.
    pub fn from_dense(dense: &[Vec<f64>], taus: Vec<NaiveDate>) -> Result<Self> {
        let size = dense.len();
        let mut upper = Vec::with_capacity(triangle_len(size));
        for (a, row) in dense.iter().enumerate() {
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    found: row.len(),
                });
            }
            if row[a] != 0.0 {
                return Err(Error::InvalidDistances(format!("non-zero diagonal at {a}")));
            }
            for b in a + 1..size {
                if row[b] != dense[b][a] {
                    return Err(Error::InvalidDistances(format!("not symmetric at ({a}, {b})")));
                }
                upper.push(row[b]);
            }
        }
        Self::from_upper(size, upper, taus)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn taus(&self) -> &[NaiveDate] {
        &self.taus
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        use std::cmp::Ordering::*;
        match a.cmp(&b) {
            Equal => 0.0,
            Less => self.upper[crate::correlation::upper_index(self.size, a, b)],
            Greater => self.upper[crate::correlation::upper_index(self.size, b, a)],
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n * n];
        let mut k = 0;
        for a in 0..n {
            for b in a + 1..n {
                out[a * n + b] = self.upper[k];
                out[b * n + a] = self.upper[k];
                k += 1;
            }
        }
        out
    }

    pub fn is_all_zero(&self) -> bool {
        self.upper.iter().all(|&v| v == 0.0)
    }

    /// Rounds every entry through `f32`, matching what the on-disk format
    /// preserves.
    pub fn quantized_f32(&self) -> Self {
        FrameDistanceMatrix {
            size: self.size,
            upper: self.upper.iter().map(|&v| v as f32 as f64).collect(),
            taus: self.taus.clone(),
        }
    }
}

pub fn pairwise_distances(frames: &FrameSet) -> Result<FrameDistanceMatrix> {
    pairwise_distances_with_progress(frames, |_| {})
}

/// All-pairs ζ distances. Rows are distributed across the rayon pool; each
/// row writes a disjoint slice, so the result is independent of thread
/// count. `progress` receives the running number of completed pairs.
pub fn pairwise_distances_with_progress<P>(frames: &FrameSet, progress: P) -> Result<FrameDistanceMatrix>
where
    P: Fn(u64) + Sync,
{
    let f = frames.len();
    if f < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 frames, got {f}")));
    }
    let n = frames.dim();
    let fr = frames.frames();
    let done = AtomicU64::new(0);
    let rows: Vec<Vec<f64>> = (0..f)
        .into_par_iter()
        .map(|a| {
            let row: Vec<f64> = (a + 1..f)
                .map(|b| zeta_unchecked(fr[a].upper(), fr[b].upper(), n))
                .collect();
            let total = done.fetch_add(row.len() as u64, Ordering::Relaxed) + row.len() as u64;
            progress(total);
            row
        })
        .collect();
    let upper = rows.concat();
    FrameDistanceMatrix::from_upper(f, upper, frames.taus())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k)
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize, k: u64) -> CorrelationFrame {
        let upper = (0..triangle_len(n)).map(|_| rng.random_range(-1.0..=1.0)).collect();
        CorrelationFrame::from_upper(day(k), 20, 0.0, n, upper).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let a = CorrelationFrame::from_upper(day(0), 20, 0.0, 2, vec![0.5]).unwrap();
        let b = CorrelationFrame::from_upper(day(1), 20, 0.0, 2, vec![0.1]).unwrap();
        assert!((frame_distance(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(frame_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn matches_dense_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [5, 13] {
            let a = random_frame(&mut rng, n, 0);
            let b = random_frame(&mut rng, n, 1);
            let (da, db) = (a.to_dense(), b.to_dense());
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += (da[i][j] - db[i][j]).abs();
                }
            }
            let want = s / (n * n) as f64;
            assert!((frame_distance(&a, &b).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_frame(&mut rng, 3, 0);
        let b = random_frame(&mut rng, 4, 1);
        assert!(matches!(frame_distance(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pairwise_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut frames: Vec<_> = (0..6).map(|k| random_frame(&mut rng, 7, k)).collect();
        // duplicate content at a later date
        let dup = CorrelationFrame::from_upper(day(10), 20, 0.0, 7, frames[2].upper().to_vec()).unwrap();
        frames.push(dup);
        let set = FrameSet::new(20, 1, 0.0, frames.clone()).unwrap();
        let d = pairwise_distances(&set).unwrap();
        assert_eq!(d.size(), 7);
        assert_eq!(d.upper().len(), 21);
        assert_eq!(d.get(2, 6), 0.0);
        for a in 0..7 {
            assert_eq!(d.get(a, a), 0.0);
            for b in 0..7 {
                assert_eq!(d.get(a, b), d.get(b, a));
                assert_eq!(d.get(a, b), if a == b { 0.0 } else { frame_distance(&frames[a], &frames[b]).unwrap() });
            }
        }
    }

    #[test]
    fn dense_validation() {
        let taus = vec![day(0), day(1)];
        assert!(FrameDistanceMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]], taus.clone()).is_ok());
        assert!(FrameDistanceMatrix::from_dense(&[vec![0.0, 1.0], vec![0.5, 0.0]], taus.clone()).is_err());
        assert!(FrameDistanceMatrix::from_dense(&[vec![0.0, -1.0], vec![-1.0, 0.0]], taus.clone()).is_err());
        assert!(FrameDistanceMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 0.0]], taus).is_err());
    }

    #[test]
    fn pair_count_for_index_scale() {
        assert_eq!(triangle_len(3503), 6_133_753);
    }
}
