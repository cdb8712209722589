//! State-sequence analytics: transitions, tridiagonality, trajectories,
//! the equal-weighted index proxy and out-of-sample classification.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::StateModel;
use crate::correlation::{CorrelationFrame, FrameSet, ReturnTable};
use crate::error::{Error, Result};
use crate::geometry::distance::zeta_unchecked;
use crate::geometry::mds::euclid;
use crate::geometry::Embedding;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub k: usize,
    /// `counts[a][b]`: consecutive frame pairs in state a+1 then b+1.
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts, self-transitions included.
    pub probabilities: Vec<Vec<f64>>,
    /// States (1-based) with no outgoing transition; their rows are zero.
    pub empty_rows: Vec<usize>,
}

impl TransitionMatrix {
    pub fn from_sequence(states: &[usize], k: usize) -> Result<Self> {
        if let Some(&s) = states.iter().find(|&&s| s == 0 || s > k) {
            return Err(Error::InvalidParameter(format!("state id {s} outside 1..={k}")));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for w in states.windows(2) {
            counts[w[0] - 1][w[1] - 1] += 1;
        }
        let (probabilities, empty_rows) = normalize(&counts, false);
        Ok(TransitionMatrix {
            k,
            counts,
            probabilities,
            empty_rows,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from - 1][to - 1]
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.probabilities[from - 1][to - 1]
    }

    /// Row-normalized over transitions that leave the state.
    pub fn probabilities_excluding_self(&self) -> Vec<Vec<f64>> {
        normalize(&self.counts, true).0
    }
}

fn normalize(counts: &[Vec<u64>], exclude_self: bool) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut empty = Vec::new();
    let probs = counts
        .iter()
        .enumerate()
        .map(|(a, row)| {
            let keep = |b: usize| !(exclude_self && a == b);
            let total: u64 = row.iter().enumerate().filter(|(b, _)| keep(*b)).map(|(_, c)| c).sum();
            if total == 0 {
                empty.push(a + 1);
                return vec![0.0; row.len()];
            }
            row.iter()
                .enumerate()
                .map(|(b, &c)| if keep(b) { c as f64 / total as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    (probs, empty)
}

pub fn transition_counts(states: &StateModel) -> Result<TransitionMatrix> {
    TransitionMatrix::from_sequence(&states.state_of_frame, states.k_star)
}

/// Share of transitions between equal or adjacent states.
pub fn tridiagonality_score(tm: &TransitionMatrix) -> f64 {
    let total = tm.total();
    if total == 0 {
        return 1.0;
    }
    let near: u64 = (0..tm.k)
        .flat_map(|a| (0..tm.k).map(move |b| (a, b)))
        .filter(|(a, b)| a.abs_diff(*b) <= 1)
        .map(|(a, b)| tm.counts[a][b])
        .sum();
    near as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbiddenTransition {
    pub from_state: usize,
    pub to_state: usize,
    pub count: u64,
}

/// Jumps into the highest state from anywhere below the penultimate state.
pub fn forbidden_transition_report(tm: &TransitionMatrix) -> Vec<ForbiddenTransition> {
    let k = tm.k;
    (1..k.saturating_sub(1))
        .map(|a| ForbiddenTransition {
            from_state: a,
            to_state: k,
            count: tm.count(a, k),
        })
        .collect()
}

/// Equal-weighted mean of constituent log-returns per date.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl IndexReturnSeries {
    pub fn at(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }
}

pub fn index_return_proxy(returns: &ReturnTable) -> IndexReturnSeries {
    let n = returns.n_instruments();
    let values = (0..returns.n_dates())
        .map(|t| (0..n).map(|i| returns.get(i, t)).sum::<f64>() / n as f64)
        .collect();
    IndexReturnSeries {
        dates: returns.dates().to_vec(),
        values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNode {
    pub tau: NaiveDate,
    pub point: Vec<f64>,
    pub state_id: usize,
    pub index_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub nodes: Vec<TrajectoryNode>,
}

impl Trajectory {
    pub fn segments(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

pub fn build_trajectory(
    embedding: &Embedding,
    states: &StateModel,
    index_returns: Option<&IndexReturnSeries>,
) -> Result<Trajectory> {
    if embedding.len() != states.len() {
        return Err(Error::Misaligned {
            expected: embedding.len(),
            found: states.len(),
        });
    }
    if let Some(pos) = embedding.taus.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::NonIncreasingDates(pos + 1));
    }
    if embedding.taus != states.taus {
        return Err(Error::InvalidParameter("embedding and state dates differ".into()));
    }
    let nodes = (0..embedding.len())
        .map(|i| {
            let tau = embedding.taus[i];
            let index_return = match index_returns {
                Some(series) => Some(
                    series
                        .at(tau)
                        .ok_or_else(|| Error::InvalidParameter(format!("no index return on {tau}")))?,
                ),
                None => None,
            };
            Ok(TrajectoryNode {
                tau,
                point: embedding.point(i).to_vec(),
                state_id: states.state_of_frame[i],
                index_return,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tau: NaiveDate,
    pub state_id: usize,
    pub point: Vec<f64>,
    pub nearest_centroid_distance: f64,
}

const PLACEMENT_NEIGHBORS: usize = 5;
const PLACEMENT_MAX_ITER: usize = 1000;
const PLACEMENT_TOL: f64 = 1e-12;

/// Places a new frame in an existing embedding and assigns the state of the
/// nearest centroid. The reference map is left untouched.
pub fn classify_new_frame(
    frame: &CorrelationFrame,
    reference: &FrameSet,
    embedding: &Embedding,
    states: &StateModel,
) -> Result<Classification> {
    if frame.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            found: frame.dim(),
        });
    }
    if frame.epsilon != reference.epsilon || frame.epsilon != states.epsilon_star {
        return Err(Error::EpsilonMismatch {
            expected: states.epsilon_star,
            found: frame.epsilon,
        });
    }
    if frame.epoch_len != reference.epoch_len {
        return Err(Error::InvalidParameter(format!(
            "epoch length {} does not match reference {}",
            frame.epoch_len, reference.epoch_len
        )));
    }
    if reference.len() != embedding.len() || reference.len() != states.len() {
        return Err(Error::Misaligned {
            expected: reference.len(),
            found: embedding.len().min(states.len()),
        });
    }
    if embedding.dim != states.dim {
        return Err(Error::DimensionMismatch {
            expected: states.dim,
            found: embedding.dim,
        });
    }
    let n = frame.dim();
    let deltas: Vec<f64> = reference
        .frames()
        .par_iter()
        .map(|r| zeta_unchecked(frame.upper(), r.upper(), n))
        .collect();

    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[a].total_cmp(&deltas[b]).then(a.cmp(&b)));

    let nearest = order[0];
    if deltas[nearest] == 0.0 {
        let point = embedding.point(nearest).to_vec();
        let state_id = states.state_of_frame[nearest];
        return Ok(Classification {
            tau: frame.tau,
            state_id,
            nearest_centroid_distance: euclid(&point, states.centroid(state_id)),
            point,
        });
    }

    let dim = embedding.dim;
    let take = PLACEMENT_NEIGHBORS.min(order.len());
    let mut x = vec![0.0; dim];
    for &j in &order[..take] {
        for c in 0..dim {
            x[c] += embedding.point(j)[c] / take as f64;
        }
    }
    let point = place_point(embedding, &deltas, x);
    let (state_id, nearest_centroid_distance) = nearest_state(states, &point);
    Ok(Classification {
        tau: frame.tau,
        state_id,
        point,
        nearest_centroid_distance,
    })
}

/// Single-point stress majorization with every reference point frozen.
fn place_point(embedding: &Embedding, deltas: &[f64], mut x: Vec<f64>) -> Vec<f64> {
    let dim = embedding.dim;
    let m = deltas.len() as f64;
    for _ in 0..PLACEMENT_MAX_ITER {
        let mut next = vec![0.0; dim];
        for (j, &delta) in deltas.iter().enumerate() {
            let y = embedding.point(j);
            let d = euclid(&x, y);
            let ratio = if d > 0.0 { delta / d } else { 0.0 };
            for c in 0..dim {
                next[c] += y[c] + ratio * (x[c] - y[c]);
            }
        }
        next.iter_mut().for_each(|v| *v /= m);
        let step = euclid(&next, &x);
        let scale = next.iter().map(|v| v.abs()).fold(1e-300, f64::max);
        x = next;
        if step <= PLACEMENT_TOL * scale {
            break;
        }
    }
    x
}

/// Nearest centroid (1-based state) and its distance; ties go to the lower state.
pub fn nearest_state(states: &StateModel, point: &[f64]) -> (usize, f64) {
    (1..=states.k_star)
        .map(|s| (s, euclid(point, states.centroid(s))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}
