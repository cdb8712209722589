//! Multi-start k-means in the embedding, the restart-robustness landscape
//! over (k, ε), optimum selection and state labeling.

use chrono::NaiveDate;
use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{build_frames, FrameSet, ReturnTable};
use crate::error::{Error, Result};
use crate::geometry::{mds_embed, pairwise_distances, Embedding, MdsConfig};

pub const DEFAULT_K_MIN: usize = 4;
pub const DEFAULT_N_INIT: usize = 1000;
pub const DEFAULT_KMEANS_MAX_ITER: usize = 300;

/// ε ∈ {0.00, 0.05, …, 0.95}.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).map(|e| (e * 100.0).round() / 100.0).collect()
}

pub fn default_k_range() -> Vec<usize> {
    (1..=10).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub k: usize,
    pub dim: usize,
    pub assignments: Vec<usize>,
    /// Row-major k×dim.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Mean Euclidean distance from each point to its own centroid.
    pub d_intra: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Inertia after every centroid update.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from a Forgy start: `k` distinct points drawn uniformly.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidParameter("points length is not a multiple of dim".into()));
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut centroids: Vec<f64> = picks.iter().flat_map(|&i| pt(i).iter().copied()).collect();
    let mut assignments = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        for i in 0..n {
            let p = pt(i);
            let cur = assignments[i];
            let mut best = cur;
            let mut best_d = if cur == usize::MAX {
                f64::INFINITY
            } else {
                sq_dist(p, &centroids[cur * dim..(cur + 1) * dim])
            };
            for c in 0..k {
                let d = sq_dist(p, &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if best != cur {
                assignments[i] = best;
                changed = true;
            }
        }
        if repair_empty(points, dim, k, &mut assignments, &centroids) {
            changed = true;
        }
        centroids = update_centroids(points, dim, k, &assignments);
        inertia_trace.push(inertia_of(points, dim, &assignments, &centroids));
        iterations += 1;
        if !changed || iterations >= max_iter {
            break;
        }
    }

    let inertia = *inertia_trace.last().expect("one iteration");
    let d_intra = (0..n)
        .map(|i| sq_dist(pt(i), &centroids[assignments[i] * dim..(assignments[i] + 1) * dim]).sqrt())
        .sum::<f64>()
        / n as f64;
    Ok(KMeansResult {
        k,
        dim,
        assignments,
        centroids,
        inertia,
        d_intra,
        seed,
        iterations,
        inertia_trace,
    })
}

/// Moves the point farthest from its centroid into each empty cluster.
/// Returns whether any assignment changed.
fn repair_empty(points: &[f64], dim: usize, k: usize, assignments: &mut [usize], centroids: &[f64]) -> bool {
    let mut changed = false;
    loop {
        let mut sizes = vec![0usize; k];
        assignments.iter().for_each(|&a| sizes[a] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return changed;
        };
        let donor = (0..assignments.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| {
                let c = assignments[i];
                (i, sq_dist(&points[i * dim..(i + 1) * dim], &centroids[c * dim..(c + 1) * dim]))
            })
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .expect("k <= n guarantees a multi-member cluster")
            .0;
        assignments[donor] = empty;
        changed = true;
    }
}

fn update_centroids(points: &[f64], dim: usize, k: usize, assignments: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for d in 0..dim {
            sums[c * dim + d] += points[i * dim + d];
        }
    }
    for c in 0..k {
        for d in 0..dim {
            sums[c * dim + d] /= counts[c] as f64;
        }
    }
    sums
}

fn inertia_of(points: &[f64], dim: usize, assignments: &[usize], centroids: &[f64]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(&points[i * dim..(i + 1) * dim], &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

/// Summary of clustering robustness across restarts for one (k, ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub k: usize,
    pub epsilon: f64,
    pub sigma_d_intra: f64,
    pub mean_d_intra: f64,
    pub n_init: usize,
}

/// Scalar robustness measure derived from a batch of randomized k-means runs.
/// Returns `(sigma, mean)`.
pub trait IntraClusterMeasure: Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, points: &[f64], dim: usize, runs: &[KMeansResult]) -> (f64, f64);
}

/// Population standard deviation and mean of `d_intra` across restarts.
#[derive(Debug, Clone, Copy, Default)]
pub struct RestartSpread;

impl IntraClusterMeasure for RestartSpread {
    fn name(&self) -> &'static str {
        "restart-spread"
    }

    fn evaluate(&self, _points: &[f64], _dim: usize, runs: &[KMeansResult]) -> (f64, f64) {
        let values: Vec<f64> = runs.iter().map(|r| r.d_intra).collect();
        population_std_mean(&values)
    }
}

/// Standard deviation and mean of all within-cluster pairwise distances in
/// the lowest-inertia run.
#[derive(Debug, Clone, Copy, Default)]
pub struct WithinRunPairwise;

impl IntraClusterMeasure for WithinRunPairwise {
    fn name(&self) -> &'static str {
        "within-run-pairwise"
    }

    fn evaluate(&self, points: &[f64], dim: usize, runs: &[KMeansResult]) -> (f64, f64) {
        let best = runs
            .iter()
            .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
            .expect("non-empty runs");
        let n = best.assignments.len();
        let mut values = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if best.assignments[a] == best.assignments[b] {
                    values.push(sq_dist(&points[a * dim..(a + 1) * dim], &points[b * dim..(b + 1) * dim]).sqrt());
                }
            }
        }
        if values.is_empty() {
            return (0.0, 0.0);
        }
        population_std_mean(&values)
    }
}

/// `(σ, mean)` with σ the population standard deviation. Exactly zero when
/// every value is identical.
pub fn population_std_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().all(|&v| v == values[0]) {
        return (0.0, values[0]);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (var.sqrt(), mean)
}

/// Runs `n_init` independent k-means restarts with seeds `seed + r`.
pub fn kmeans_restarts(points: &[f64], dim: usize, k: usize, n_init: usize, seed: u64) -> Result<Vec<KMeansResult>> {
    (0..n_init as u64)
        .into_par_iter()
        .map(|r| kmeans(points, dim, k, seed.wrapping_add(r), DEFAULT_KMEANS_MAX_ITER))
        .collect()
}

/// Lowest-inertia run among `n_init` restarts; ties go to the earliest seed.
pub fn best_of_restarts(points: &[f64], dim: usize, k: usize, n_init: usize, seed: u64) -> Result<KMeansResult> {
    if n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be >= 1".into()));
    }
    let runs = kmeans_restarts(points, dim, k, n_init, seed)?;
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = r;
        }
    }
    Ok(runs.into_iter().nth(best).expect("non-empty"))
}

/// `(sigma_d_intra, mean_d_intra)` over `n_init` restarts.
pub fn intra_cluster_sigma(points: &Embedding, k: usize, n_init: usize, seed: u64) -> Result<(f64, f64)> {
    intra_cluster_sigma_with(points, k, n_init, seed, &RestartSpread)
}

pub fn intra_cluster_sigma_with(
    points: &Embedding,
    k: usize,
    n_init: usize,
    seed: u64,
    measure: &dyn IntraClusterMeasure,
) -> Result<(f64, f64)> {
    if n_init < 2 {
        return Err(Error::InvalidParameter(format!("n_init must be >= 2, got {n_init}")));
    }
    let runs = kmeans_restarts(&points.points, points.dim, k, n_init, seed)?;
    Ok(measure.evaluate(&points.points, points.dim, &runs))
}

/// Landscape cells for every `k` on one embedding, in `k_range` order.
pub fn landscape_for_embedding(
    embedding: &Embedding,
    epsilon: f64,
    k_range: &[usize],
    n_init: usize,
    seed: u64,
    measure: &dyn IntraClusterMeasure,
) -> Result<Vec<LandscapeCell>> {
    k_range
        .iter()
        .map(|&k| {
            let (sigma, mean) = intra_cluster_sigma_with(embedding, k, n_init, seed, measure)?;
            Ok(LandscapeCell {
                k,
                epsilon,
                sigma_d_intra: sigma,
                mean_d_intra: mean,
                n_init,
            })
        })
        .collect()
}

/// Frames, distances and embedding for one ε. Distances are rounded through
/// `f32` before embedding so results match the single-precision on-disk form.
#[derive(Debug, Clone)]
pub struct EpsilonStage {
    pub frames: FrameSet,
    pub embedding: Embedding,
}

pub fn embed_for_epsilon(
    returns: &ReturnTable,
    epoch_len: usize,
    shift: usize,
    epsilon: f64,
    mds: &MdsConfig,
) -> Result<EpsilonStage> {
    let frames = build_frames(returns, epoch_len, shift, epsilon)?;
    let dist = pairwise_distances(&frames)?.quantized_f32();
    let embedding = mds_embed(&dist, mds)?;
    Ok(EpsilonStage { frames, embedding })
}

#[derive(Debug, Clone)]
pub struct ScanParams {
    pub epoch_len: usize,
    pub shift: usize,
    pub k_range: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub n_init: usize,
    pub seed: u64,
    pub mds: MdsConfig,
}

/// Full (k, ε) landscape. Cells are emitted ε-major, then in `k_range` order.
pub fn landscape_scan(returns: &ReturnTable, params: &ScanParams) -> Result<Vec<LandscapeCell>> {
    if params.k_range.is_empty() || params.epsilon_grid.is_empty() {
        return Err(Error::InvalidParameter("empty k range or epsilon grid".into()));
    }
    let mut cells = Vec::with_capacity(params.k_range.len() * params.epsilon_grid.len());
    for &eps in &params.epsilon_grid {
        let stage = embed_for_epsilon(returns, params.epoch_len, params.shift, eps, &params.mds)?;
        cells.extend(landscape_for_embedding(
            &stage.embedding,
            eps,
            &params.k_range,
            params.n_init,
            params.seed,
            &RestartSpread,
        )?);
    }
    Ok(cells)
}

/// `(k*, ε*)` of the smallest σ among cells with `k >= k_min`; ties go to the
/// smaller k, then the smaller ε.
pub fn select_optimum(cells: &[LandscapeCell], k_min: usize) -> Result<(usize, f64)> {
    cells
        .iter()
        .filter(|c| c.k >= k_min && !c.sigma_d_intra.is_nan())
        .min_by(|a, b| {
            a.sigma_d_intra
                .total_cmp(&b.sigma_d_intra)
                .then(a.k.cmp(&b.k))
                .then(a.epsilon.total_cmp(&b.epsilon))
        })
        .map(|c| (c.k, c.epsilon))
        .ok_or(Error::NoEligibleCells(k_min))
}

/// Clusters relabeled S1..Sk in ascending order of mean raw correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    pub k_star: usize,
    pub epsilon_star: f64,
    /// 1-based state id per frame.
    pub state_of_frame: Vec<usize>,
    pub dim: usize,
    /// Row-major k×dim, row s−1 belongs to state s.
    pub centroids: Vec<f64>,
    pub mu: Vec<f64>,
    pub taus: Vec<NaiveDate>,
}

impl StateModel {
    pub fn centroid(&self, state: usize) -> &[f64] {
        &self.centroids[(state - 1) * self.dim..state * self.dim]
    }

    pub fn len(&self) -> usize {
        self.state_of_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_of_frame.is_empty()
    }
}

/// Orders clusters by μ, the mean over member frames of the mean off-diagonal
/// raw correlation. Exact μ ties are broken by each cluster's first member.
pub fn label_states(frames_raw: &FrameSet, result: &KMeansResult, epsilon: f64) -> Result<StateModel> {
    if frames_raw.epsilon != 0.0 {
        return Err(Error::InvalidParameter("state labels need raw (epsilon = 0) frames".into()));
    }
    let n = result.assignments.len();
    if frames_raw.len() != n {
        return Err(Error::Misaligned {
            expected: n,
            found: frames_raw.len(),
        });
    }
    let k = result.k;
    let means = frames_raw.mean_correlations();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (i, &c) in result.assignments.iter().enumerate() {
        sums[c] += means[i];
        counts[c] += 1;
        first[c] = first[c].min(i);
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Numerical(format!("cluster {c} has no members")));
    }
    let mu: Vec<f64> = (0..k).map(|c| sums[c] / counts[c] as f64).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]).then(first[a].cmp(&first[b])));
    let mut state_of_cluster = vec![0; k];
    for (rank, &c) in order.iter().enumerate() {
        state_of_cluster[c] = rank + 1;
    }
    Ok(StateModel {
        k_star: k,
        epsilon_star: epsilon,
        state_of_frame: result.assignments.iter().map(|&c| state_of_cluster[c]).collect(),
        dim: result.dim,
        centroids: order.iter().flat_map(|&c| result.centroid(c).iter().copied()).collect(),
        mu: order.iter().map(|&c| mu[c]).collect(),
        taus: frames_raw.taus(),
    })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashMap;
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CorrelationFrame;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, centers: &[[f64; 3]], per: usize, sigma: f64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (l, c) in centers.iter().enumerate() {
            for _ in 0..per {
                for d in 0..3 {
                    pts.push(c[d] + noise.sample(&mut rng));
                }
                labels.push(l);
            }
        }
        (pts, labels)
    }

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k)
    }

    fn embedding(points: Vec<f64>) -> Embedding {
        let n = points.len() / 3;
        Embedding::from_points(3, points, (0..n as u64).map(day).collect()).unwrap()
    }

    #[test]
    fn k_one_is_the_mean() {
        let pts = vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 3.0, 0.0];
        let r = kmeans(&pts, 3, 1, 0, 100).unwrap();
        assert_eq!(r.centroids, vec![1.0, 1.0, 0.0]);
        let want = (2f64.sqrt() + 2f64.sqrt() + 2.0) / 3.0;
        assert!((r.d_intra - want).abs() < 1e-15);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let (pts, _) = blobs(1, &[[0.0; 3]], 12, 1.0);
        let r = kmeans(&pts, 3, 12, 5, 100).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.d_intra, 0.0);
        let (sigma, _) = intra_cluster_sigma(&embedding(pts), 12, 10, 0).unwrap();
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![0.0; 6];
        assert!(matches!(kmeans(&pts, 3, 3, 0, 10), Err(Error::TooManyClusters { k: 3, n: 2 })));
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let centers = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let (pts, labels) = blobs(2, &centers, 40, 0.01);
        // Forgy can land two seeds in one blob; some seed recovers all three.
        let runs = kmeans_restarts(&pts, 3, 3, 20, 100).unwrap();
        let best = runs.iter().min_by(|a, b| a.inertia.total_cmp(&b.inertia)).unwrap();
        assert_eq!(adjusted_rand_index(&best.assignments, &labels), 1.0);
        for run in &runs {
            for w in run.inertia_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            let mut sizes = vec![0; 3];
            run.assignments.iter().for_each(|&a| sizes[a] += 1);
            assert!(sizes.iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn identical_convergence_gives_zero_sigma() {
        // a single well-separated pair of blobs: k = 2 always finds it
        let (pts, _) = blobs(3, &[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]], 30, 0.01);
        let (sigma, mean) = intra_cluster_sigma(&embedding(pts), 2, 50, 7).unwrap();
        assert_eq!(sigma, 0.0);
        assert!(mean > 0.0);
    }

    #[test]
    fn ambiguous_blobs_have_spread() {
        let (pts, _) = blobs(4, &[[0.0, 0.0, 0.0], [0.6, 0.0, 0.0]], 60, 0.3);
        let emb = embedding(pts);
        let (s1, _) = intra_cluster_sigma(&emb, 3, 100, 0).unwrap();
        let (s2, _) = intra_cluster_sigma(&emb, 3, 100, 10_000).unwrap();
        assert!(s1 > 0.0 && s2 > 0.0);
        assert!(intra_cluster_sigma(&emb, 3, 1, 0).is_err());
    }

    #[test]
    fn select_optimum_rules() {
        let cell = |k, epsilon, sigma_d_intra| LandscapeCell {
            k,
            epsilon,
            sigma_d_intra,
            mean_d_intra: 0.0,
            n_init: 10,
        };
        let cells = vec![
            cell(2, 0.0, 0.0),
            cell(4, 0.5, 0.3),
            cell(5, 0.9, 0.1),
            cell(6, 0.0, 0.2),
        ];
        assert_eq!(select_optimum(&cells, 4).unwrap(), (5, 0.9));
        let ties = vec![cell(5, 0.5, 0.1), cell(4, 0.5, 0.1), cell(4, 0.2, 0.1)];
        assert_eq!(select_optimum(&ties, 4).unwrap(), (4, 0.2));
        assert!(matches!(select_optimum(&cells[..1], 4), Err(Error::NoEligibleCells(4))));
    }

    #[test]
    fn default_grids() {
        let g = default_epsilon_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[18], 0.9);
        assert_eq!(g[19], 0.95);
        assert_eq!(default_k_range(), (1..=10).collect::<Vec<_>>());
    }

    fn frame_with_mean(tau: u64, value: f64) -> CorrelationFrame {
        CorrelationFrame::from_upper(day(tau), 20, 0.0, 3, vec![value; 3]).unwrap()
    }

    #[test]
    fn labels_are_canonical() {
        let frames = FrameSet::new(
            20,
            1,
            0.0,
            vec![frame_with_mean(0, 0.8), frame_with_mean(1, 0.1), frame_with_mean(2, 0.7), frame_with_mean(3, 0.2)],
        )
        .unwrap();
        let a = KMeansResult {
            k: 2,
            dim: 1,
            assignments: vec![0, 1, 0, 1],
            centroids: vec![5.0, -5.0],
            inertia: 0.0,
            d_intra: 0.0,
            seed: 0,
            iterations: 1,
            inertia_trace: vec![0.0],
        };
        let b = KMeansResult {
            assignments: vec![1, 0, 1, 0],
            centroids: vec![-5.0, 5.0],
            ..a.clone()
        };
        let sa = label_states(&frames, &a, 0.0).unwrap();
        let sb = label_states(&frames, &b, 0.0).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(sa.state_of_frame, vec![2, 1, 2, 1]);
        assert!((sa.mu[0] - 0.15).abs() < 1e-15 && (sa.mu[1] - 0.75).abs() < 1e-15);
        assert_eq!(sa.centroid(1), &[-5.0]);

        let short = KMeansResult {
            assignments: vec![0, 1, 0],
            ..a
        };
        assert!(matches!(label_states(&frames, &short, 0.0), Err(Error::Misaligned { .. })));
    }

    #[test]
    fn ari_sanity() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Vec<usize> = (0..2000).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<usize> = (0..2000).map(|_| rng.random_range(0..3)).collect();
        assert!(adjusted_rand_index(&a, &b).abs() < 0.02);
    }

    #[test]
    fn alternative_measure_is_pluggable() {
        let (pts, _) = blobs(5, &[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]], 20, 0.1);
        let emb = embedding(pts);
        let (s, m) = intra_cluster_sigma_with(&emb, 2, 10, 0, &WithinRunPairwise).unwrap();
        assert!(s > 0.0 && m > 0.0);
        assert_eq!(WithinRunPairwise.name(), "within-run-pairwise");
    }
}
