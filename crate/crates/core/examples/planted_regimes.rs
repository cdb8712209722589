//! End-to-end run on planted correlation regimes.
//!
//! `cargo run --release -p mstates-core --example planted_regimes -- [seed] [n_init]`

use mstates_core::clustering::best_of_restarts;
use mstates_core::prelude::*;

fn main() -> mstates_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let n_init: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let spec = RegimeSpec {
        n_stocks: 50,
        regimes: [0.15, 0.35, 0.55, 0.75]
            .iter()
            .map(|&c| Regime {
                duration_days: 400,
                base_correlation: c,
            })
            .collect(),
        noise_sigma: 0.01,
        seed,
    };
    let returns = generate_returns(&spec)?;
    let params = ScanParams {
        epoch_len: 20,
        shift: 1,
        k_range: (1..=8).collect(),
        epsilon_grid: vec![0.0, 0.3, 0.6, 0.9],
        n_init,
        seed,
        mds: MdsConfig {
            seed,
            ..MdsConfig::default()
        },
    };
    let cells = landscape_scan(&returns, &params)?;
    for c in &cells {
        println!("k={} eps={:.2} sigma={:.5} mean={:.5}", c.k, c.epsilon, c.sigma_d_intra, c.mean_d_intra);
    }
    let (k, eps) = select_optimum(&cells, 4)?;
    println!("optimum: k={k} eps={eps}");

    let stage = embed_for_epsilon(&returns, 20, 1, eps, &params.mds)?;
    let raw = build_frames(&returns, 20, 1, 0.0)?;
    let run = best_of_restarts(&stage.embedding.points, stage.embedding.dim, k, n_init, seed)?;
    let states = label_states(&raw, &run, eps)?;
    println!("mu: {:?}", states.mu);

    // agreement with the planted regimes on frames inside a single regime
    let regime = spec.regime_of_day();
    let (found, truth): (Vec<usize>, Vec<usize>) = (0..states.len())
        .filter(|&f| regime[f] == regime[f + 19])
        .map(|f| (states.state_of_frame[f], regime[f]))
        .unzip();
    println!("adjusted Rand index: {:.3}", adjusted_rand_index(&found, &truth));

    let tm = transition_counts(&states)?;
    println!("tridiagonality: {:.4}", tridiagonality_score(&tm));
    Ok(())
}
