use chrono::{Days, NaiveDate};
use mstates_core::clustering::kmeans;
use mstates_core::correlation::{
    build_frames, epoch_correlation, frame_count, power_map, power_map_scalar, CorrelationFrame, FrameSet, ReturnTable,
};
use mstates_core::dynamics::{tridiagonality_score, TransitionMatrix};
use mstates_core::geometry::{frame_distance, pairwise_distances};
use mstates_core::ingest::Instrument;
use proptest::prelude::*;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Days::new(i as u64)
}

fn table(n: usize, t: usize, values: Vec<f64>) -> ReturnTable {
    let instruments = (0..n).map(|i| Instrument::bare(format!("X{i}"))).collect();
    ReturnTable::new(instruments, (0..t).map(day).collect(), values).unwrap()
}

/// Returns whose every 20-day window has non-zero variance.
fn returns(n: usize, t: usize) -> impl Strategy<Value = ReturnTable> {
    prop::collection::vec(-0.1f64..0.1, n * t).prop_map(move |mut v| {
        // a deterministic ramp rules out constant windows
        for (k, x) in v.iter_mut().enumerate() {
            *x += 1e-4 * ((k % 7) as f64);
        }
        table(n, t, v)
    })
}

fn frame_from(r: &ReturnTable) -> CorrelationFrame {
    epoch_correlation(r, *r.dates().last().unwrap(), 20).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric(
        a in returns(5, 20),
        b in returns(5, 20),
        c in returns(5, 20),
        eps in 0.0f64..0.95,
    ) {
        let [fa, fb, fc] = [&a, &b, &c].map(|r| power_map(&frame_from(r), eps).unwrap());
        let ab = frame_distance(&fa, &fb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(frame_distance(&fa, &fa).unwrap(), 0.0);
        prop_assert!((ab - frame_distance(&fb, &fa).unwrap()).abs() <= 1e-15);
        let (bc, ac) = (frame_distance(&fb, &fc).unwrap(), frame_distance(&fa, &fc).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn power_map_is_monotone_and_shrinks(x in -1.0f64..=1.0, y in -1.0f64..=1.0, eps in 0.0f64..1.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(power_map_scalar(lo, eps) <= power_map_scalar(hi, eps));
        prop_assert!(power_map_scalar(x, eps).abs() <= x.abs());
        prop_assert_eq!(power_map_scalar(x, eps).signum(), x.signum());
    }

    #[test]
    fn correlation_frames_are_valid(r in returns(6, 20)) {
        let f = frame_from(&r);
        let dense = f.to_dense();
        for i in 0..6 {
            prop_assert_eq!(dense[i][i], 1.0);
            for j in 0..6 {
                prop_assert_eq!(dense[i][j], dense[j][i]);
                prop_assert!((-1.0..=1.0).contains(&dense[i][j]));
            }
        }
    }

    #[test]
    fn pairwise_distances_follow_permutations(r in returns(4, 40), seed in any::<u64>()) {
        let set = build_frames(&r, 20, 1, 0.2).unwrap();
        let f = set.len();
        let mut perm: Vec<usize> = (0..f).collect();
        // Fisher-Yates driven by a tiny LCG so the case stays reproducible
        let mut s = seed;
        for i in (1..f).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<CorrelationFrame> = perm
            .iter()
            .enumerate()
            .map(|(slot, &src)| {
                let fr = &set.frames()[src];
                CorrelationFrame::from_upper(day(slot), fr.epoch_len, fr.epsilon, fr.dim(), fr.upper().to_vec()).unwrap()
            })
            .collect();
        let pset = FrameSet::new(20, 1, 0.2, permuted).unwrap();
        let d = pairwise_distances(&set).unwrap();
        let pd = pairwise_distances(&pset).unwrap();
        for a in 0..f {
            for b in 0..f {
                prop_assert_eq!(pd.get(a, b).to_bits(), d.get(perm[a], perm[b]).to_bits());
            }
        }
    }

    #[test]
    fn frame_count_matches_window_enumeration(t in 21usize..400, epoch in 2usize..30, shift in 1usize..12) {
        let n_returns = t - 1;
        let mut expected = 0;
        let mut start = 0;
        while start + epoch <= n_returns {
            expected += 1;
            start += shift;
        }
        prop_assert_eq!(frame_count(n_returns, epoch, shift), expected);
    }

    #[test]
    fn tridiagonality_survives_time_reversal(seq in prop::collection::vec(1usize..=6, 2..80)) {
        let forward = TransitionMatrix::from_sequence(&seq, 6).unwrap();
        let mut rev = seq.clone();
        rev.reverse();
        let backward = TransitionMatrix::from_sequence(&rev, 6).unwrap();
        prop_assert_eq!(tridiagonality_score(&forward), tridiagonality_score(&backward));
        for a in 1..=6 {
            for b in 1..=6 {
                prop_assert_eq!(forward.count(a, b), backward.count(b, a));
            }
        }
        prop_assert_eq!(forward.total(), seq.len() as u64 - 1);
    }

    #[test]
    fn kmeans_ignores_rigid_motions(
        centers in prop::collection::vec(-50.0f64..50.0, 9),
        jitter in prop::collection::vec(-0.5f64..0.5, 90),
        angle in 0.0f64..std::f64::consts::TAU,
        shift in prop::collection::vec(-100.0f64..100.0, 3),
        seed in 0u64..1000,
    ) {
        // 30 points around each of 3 centres; skip draws whose centres collide
        let c = |k: usize| &centers[3 * k..3 * k + 3];
        let sep = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assume!(sep(c(0), c(1)) > 10.0 && sep(c(0), c(2)) > 10.0 && sep(c(1), c(2)) > 10.0);
        let mut points = Vec::with_capacity(270);
        for i in 0..90 {
            for d in 0..3 {
                points.push(c(i % 3)[d] + jitter[(i + d * 29) % 90]);
            }
        }
        let (s, co) = angle.sin_cos();
        let moved: Vec<f64> = points
            .chunks(3)
            .flat_map(|p| {
                [co * p[0] - s * p[1] + shift[0], s * p[0] + co * p[1] + shift[1], p[2] + shift[2]]
            })
            .collect();
        let a = kmeans(&points, 3, 3, seed, 300).unwrap();
        let b = kmeans(&moved, 3, 3, seed, 300).unwrap();
        prop_assert_eq!(&a.assignments, &b.assignments);
        prop_assert!((a.d_intra - b.d_intra).abs() <= 1e-9 * a.d_intra.max(1.0));
        prop_assert!((a.inertia - b.inertia).abs() <= 1e-9 * a.inertia.max(1.0));
    }
}
