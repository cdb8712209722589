//! Metric multidimensional scaling by stress majorization (SMACOF).
//!
//! Each run starts from a random configuration (or the classical Torgerson
//! solution) and applies Guttman transforms until the relative stress
//! improvement drops below `tol`. The best of `n_restarts` runs is centered
//! and put into a canonical orientation.

use chrono::NaiveDate;
use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::distance::FrameDistanceMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdsInit {
    /// Uniform random starts for every restart.
    Random,
    /// Classical MDS for the first restart, random for the rest.
    ClassicalWarmStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdsConfig {
    pub dim: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: MdsInit,
}

impl Default for MdsConfig {
    fn default() -> Self {
        MdsConfig {
            dim: 3,
            n_restarts: 4,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
            init: MdsInit::Random,
        }
    }
}

/// Low-dimensional coordinates for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub dim: usize,
    /// Row-major F×dim.
    pub points: Vec<f64>,
    pub taus: Vec<NaiveDate>,
    /// Raw stress Σ_{a<b} (d_ab − δ_ab)² of the returned configuration.
    pub stress: f64,
    pub n_restarts_used: usize,
    pub seed: u64,
    /// Set when every input distance was zero and the embedding collapsed.
    pub degenerate: bool,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn from_points(dim: usize, points: Vec<f64>, taus: Vec<NaiveDate>) -> Result<Self> {
        if dim == 0 || points.len() != dim * taus.len() {
            return Err(Error::Misaligned {
                expected: dim * taus.len(),
                found: points.len(),
            });
        }
        Ok(Embedding {
            dim,
            points,
            taus,
            stress: 0.0,
            n_restarts_used: 0,
            seed: 0,
            degenerate: false,
        })
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclid(self.point(a), self.point(b))
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Outcome of a single SMACOF run.
#[derive(Debug, Clone)]
pub struct SmacofRun {
    pub points: Vec<f64>,
    pub stress: f64,
    /// Stress of each visited configuration, in order.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Raw stress of `points` against the dense `delta` matrix.
pub fn raw_stress(delta: &[f64], points: &[f64], n: usize, dim: usize) -> f64 {
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &points[i * dim..(i + 1) * dim];
            let row = &delta[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in i + 1..n {
                let r = euclid(xi, &points[j * dim..(j + 1) * dim]) - row[j];
                s += r * r;
            }
            s
        })
        .collect();
    partial.iter().sum()
}

/// One Guttman transform of `x` into `out`; returns the stress of `x`.
fn guttman_step(delta: &[f64], x: &[f64], out: &mut [f64], n: usize, dim: usize) -> f64 {
    // Column-major copy so the inner loop streams contiguous coordinates.
    let cols: Vec<f64> = (0..dim).flat_map(|c| (0..n).map(move |j| x[j * dim + c])).collect();
    let partial: Vec<f64> = out
        .par_chunks_mut(dim)
        .enumerate()
        .map(|(i, dst)| {
            let xi = &x[i * dim..(i + 1) * dim];
            let row = &delta[i * n..(i + 1) * n];
            match dim {
                1 => guttman_row::<1>(xi, row, &cols, i, n, dst),
                2 => guttman_row::<2>(xi, row, &cols, i, n, dst),
                3 => guttman_row::<3>(xi, row, &cols, i, n, dst),
                4 => guttman_row::<4>(xi, row, &cols, i, n, dst),
                _ => guttman_row_dyn(xi, row, &cols, i, n, dst),
            }
        })
        .collect();
    partial.iter().sum()
}

const LANES: usize = 4;

/// Row `i` of the Guttman transform. Accumulates in `LANES` independent
/// partial sums so the loop vectorizes; the reduction order is fixed.
/// Returns Σ_{j>i} (d_ij − δ_ij)².
#[inline]
fn guttman_row<const D: usize>(xi: &[f64], row: &[f64], cols: &[f64], i: usize, n: usize, dst: &mut [f64]) -> f64 {
    let mut p = [0.0; D];
    p.copy_from_slice(xi);
    let mut acc = [[0.0f64; LANES]; D];
    let mut sacc = [0.0f64; LANES];
    let blocks = n / LANES;
    for b in 0..blocks {
        let base = b * LANES;
        let mut diff = [[0.0f64; LANES]; D];
        let mut d2 = [0.0f64; LANES];
        for c in 0..D {
            let col = &cols[c * n + base..c * n + base + LANES];
            for l in 0..LANES {
                diff[c][l] = p[c] - col[l];
                d2[l] += diff[c][l] * diff[c][l];
            }
        }
        for l in 0..LANES {
            let j = base + l;
            let d = d2[l].sqrt();
            let dl = row[j];
            let ratio = if d > 0.0 { dl / d } else { 0.0 };
            for c in 0..D {
                acc[c][l] += ratio * diff[c][l];
            }
            let r = d - dl;
            sacc[l] += if j > i { r * r } else { 0.0 };
        }
    }
    let mut tail = [0.0f64; D];
    let mut stail = 0.0;
    for j in blocks * LANES..n {
        let mut diff = [0.0f64; D];
        let mut d2 = 0.0;
        for c in 0..D {
            diff[c] = p[c] - cols[c * n + j];
            d2 += diff[c] * diff[c];
        }
        let d = d2.sqrt();
        let ratio = if d > 0.0 { row[j] / d } else { 0.0 };
        for c in 0..D {
            tail[c] += ratio * diff[c];
        }
        if j > i {
            let r = d - row[j];
            stail += r * r;
        }
    }
    for c in 0..D {
        let a = &acc[c];
        dst[c] = (((a[0] + a[1]) + (a[2] + a[3])) + tail[c]) / n as f64;
    }
    ((sacc[0] + sacc[1]) + (sacc[2] + sacc[3])) + stail
}

fn guttman_row_dyn(xi: &[f64], row: &[f64], cols: &[f64], i: usize, n: usize, dst: &mut [f64]) -> f64 {
    let dim = xi.len();
    dst.fill(0.0);
    let mut s = 0.0;
    let mut diff = vec![0.0; dim];
    for j in 0..n {
        let mut d2 = 0.0;
        for c in 0..dim {
            diff[c] = xi[c] - cols[c * n + j];
            d2 += diff[c] * diff[c];
        }
        let d = d2.sqrt();
        if d > 0.0 {
            let ratio = row[j] / d;
            for c in 0..dim {
                dst[c] += ratio * diff[c];
            }
        }
        if j > i {
            let r = d - row[j];
            s += r * r;
        }
    }
    dst.iter_mut().for_each(|v| *v /= n as f64);
    s
}

/// Runs SMACOF from `init` until the relative stress improvement falls below
/// `tol` or `max_iter` Guttman transforms have been applied.
///
/// Majorization never increases stress in exact arithmetic. Should rounding
/// produce an increase near convergence, the run stops at the previous
/// configuration, so the returned trace is non-increasing.
pub fn smacof_run(delta: &[f64], n: usize, dim: usize, init: Vec<f64>, max_iter: usize, tol: f64) -> SmacofRun {
    let mut x = init;
    let mut next = vec![0.0; x.len()];
    let mut last = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        let stress = guttman_step(delta, &x, &mut next, n, dim);
        if stress > prev {
            // `last` holds the configuration whose stress is `prev`
            std::mem::swap(&mut x, &mut last);
            converged = true;
            break;
        }
        trace.push(stress);
        if stress == 0.0 || (prev.is_finite() && prev - stress < tol * prev) {
            converged = true;
            break;
        }
        prev = stress;
        std::mem::swap(&mut last, &mut x);
        std::mem::swap(&mut x, &mut next);
        if next.len() != x.len() {
            next = vec![0.0; x.len()];
        }
        iterations += 1;
    }
    let stress = if converged {
        *trace.last().expect("at least one step")
    } else {
        let s = raw_stress(delta, &x, n, dim);
        if s > prev {
            std::mem::swap(&mut x, &mut last);
        } else {
            trace.push(s);
        }
        *trace.last().expect("at least one step")
    };
    SmacofRun {
        points: x,
        stress,
        trace,
        iterations,
    }
}

/// Uniform random configuration scaled to the mean input distance.
pub fn random_init(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// RNG for restart `restart` under `seed`: one ChaCha8 stream per restart.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

pub fn validate_distances(dist: &FrameDistanceMatrix) -> Result<()> {
    if let Some(v) = dist.upper().iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidDistances(format!("entry {v} is negative or non-finite")));
    }
    Ok(())
}

pub fn mds_embed(dist: &FrameDistanceMatrix, config: &MdsConfig) -> Result<Embedding> {
    if config.dim == 0 {
        return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
    }
    if config.n_restarts == 0 {
        return Err(Error::InvalidParameter("n_restarts must be >= 1".into()));
    }
    validate_distances(dist)?;
    let n = dist.size();
    let dim = config.dim;
    if dist.is_all_zero() {
        warn!("all {n} input distances are zero; returning a collapsed embedding");
        return Ok(Embedding {
            dim,
            points: vec![0.0; n * dim],
            taus: dist.taus().to_vec(),
            stress: 0.0,
            n_restarts_used: 0,
            seed: config.seed,
            degenerate: true,
        });
    }
    let delta = dist.to_dense();
    let mean = dist.upper().iter().sum::<f64>() / dist.upper().len() as f64;

    let mut best: Option<SmacofRun> = None;
    for restart in 0..config.n_restarts {
        let init = if restart == 0 && config.init == MdsInit::ClassicalWarmStart {
            classical_mds(&delta, n, dim)
        } else {
            random_init(&mut restart_rng(config.seed, restart), n, dim, mean)
        };
        let run = smacof_run(&delta, n, dim, init, config.max_iter, config.tol);
        if best.as_ref().is_none_or(|b| run.stress < b.stress) {
            best = Some(run);
        }
    }
    let best = best.expect("n_restarts >= 1");
    let mut points = best.points;
    orient(&mut points, n, dim);
    Ok(Embedding {
        dim,
        points,
        taus: dist.taus().to_vec(),
        stress: best.stress,
        n_restarts_used: config.n_restarts,
        seed: config.seed,
        degenerate: false,
    })
}

/// Centers the configuration, rotates it onto its principal axes in order of
/// decreasing variance, and flips each axis so its third moment is
/// non-negative.
pub fn orient(points: &mut [f64], n: usize, dim: usize) {
    if n == 0 {
        return;
    }
    for c in 0..dim {
        let m = (0..n).map(|i| points[i * dim + c]).sum::<f64>() / n as f64;
        (0..n).for_each(|i| points[i * dim + c] -= m);
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        let p = &points[i * dim..(i + 1) * dim];
        for a in 0..dim {
            for b in 0..dim {
                cov[(a, b)] += p[a] * p[b];
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut rotated = vec![0.0; n * dim];
    for i in 0..n {
        for (c, &k) in order.iter().enumerate() {
            rotated[i * dim + c] = (0..dim).map(|a| points[i * dim + a] * eig.eigenvectors[(a, k)]).sum();
        }
    }
    for c in 0..dim {
        let skew: f64 = (0..n).map(|i| rotated[i * dim + c].powi(3)).sum();
        if skew < 0.0 {
            (0..n).for_each(|i| rotated[i * dim + c] = -rotated[i * dim + c]);
        }
    }
    points.copy_from_slice(&rotated);
}

/// Classical (Torgerson) MDS: top `dim` eigenpairs of the double-centered
/// squared-distance matrix, found by shifted subspace iteration.
pub fn classical_mds(delta: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let sq: Vec<f64> = delta.iter().map(|d| d * d).collect();
    // B v = −½ J D² J v with J the centering projector.
    let apply_b = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let mut out: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &sq[i * n..(i + 1) * n];
                row.iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let m = out.iter().sum::<f64>() / n as f64;
        out.iter_mut().for_each(|x| *x = -0.5 * (*x - m));
        out
    };
    // Shift by a bound on |λ_min| so the wanted eigenvalues dominate.
    let shift = (0..n)
        .map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>())
        .fold(0.0, f64::max);

    let k = dim.min(n);
    let mut q = DMatrix::<f64>::from_fn(n, k, |i, c| (((i * 7919 + c * 104_729) % 1013) as f64 / 1013.0) - 0.5);
    q = orthonormalize(q);
    for _ in 0..500 {
        let mut z = DMatrix::<f64>::zeros(n, k);
        for c in 0..k {
            let col: Vec<f64> = q.column(c).iter().copied().collect();
            let bv = apply_b(&col);
            for i in 0..n {
                z[(i, c)] = bv[i] + shift * col[i];
            }
        }
        let next = orthonormalize(z);
        let change = (&next * next.transpose() * &q - &q).norm();
        q = next;
        if change < 1e-10 {
            break;
        }
    }
    // Rayleigh–Ritz on the converged subspace.
    let mut bq = DMatrix::<f64>::zeros(n, k);
    for c in 0..k {
        let col: Vec<f64> = q.column(c).iter().copied().collect();
        let bv = apply_b(&col);
        for i in 0..n {
            bq[(i, c)] = bv[i];
        }
    }
    let small = q.transpose() * &bq;
    let small = (&small + small.transpose()) * 0.5;
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut points = vec![0.0; n * dim];
    for (c, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0).sqrt();
        let v = &q * eig.eigenvectors.column(idx);
        for i in 0..n {
            points[i * dim + c] = v[i] * lambda;
        }
    }
    points
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mut m = m;
    for c in 0..m.ncols() {
        for p in 0..c {
            let proj = m.column(c).dot(&m.column(p));
            let prev = m.column(p).clone_owned();
            m.column_mut(c).axpy(-proj, &prev, 1.0);
        }
        let norm = m.column(c).norm();
        if norm > 0.0 {
            m.column_mut(c).scale_mut(1.0 / norm);
        }
    }
    m
}
