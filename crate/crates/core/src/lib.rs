//! Market states from sliding-epoch correlation matrices.
//!
//! The pipeline turns daily prices into log-returns, computes one Pearson
//! correlation matrix per epoch (optionally noise-suppressed by the power
//! map), measures distances between these frames, embeds them with SMACOF
//! multidimensional scaling and clusters the embedding with k-means. Clusters
//! ordered by mean correlation are the market states; their transition
//! matrix summarizes market dynamics.
//!
//! ```no_run
//! use mstates_core::prelude::*;
//! # fn main() -> mstates_core::Result<()> {
//! let spec = RegimeSpec {
//!     n_stocks: 20,
//!     regimes: vec![
//!         Regime { duration_days: 200, base_correlation: 0.1 },
//!         Regime { duration_days: 200, base_correlation: 0.6 },
//!     ],
//!     noise_sigma: 0.01,
//!     seed: 1,
//! };
//! let returns = generate_returns(&spec)?;
//! let stage = embed_for_epsilon(&returns, 20, 1, 0.0, &MdsConfig::default())?;
//! let run = kmeans(&stage.embedding.points, 3, 2, 0, 300)?;
//! let states = label_states(&stage.frames, &run, 0.0)?;
//! let tm = transition_counts(&states)?;
//! println!("tridiagonality {}", tridiagonality_score(&tm));
//! # Ok(())
//! # }
//! ```

pub mod clustering;
pub mod correlation;
pub mod dynamics;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod ingest;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

pub mod prelude {
    pub use crate::clustering::{
        adjusted_rand_index, best_of_restarts, default_epsilon_grid, default_k_range, embed_for_epsilon, intra_cluster_sigma,
        kmeans, label_states, landscape_for_embedding, landscape_scan, select_optimum, EpsilonStage,
        IntraClusterMeasure, KMeansResult, LandscapeCell, RestartSpread, ScanParams, StateModel,
    };
    pub use crate::correlation::{
        build_frames, epoch_correlation, frame_count, log_returns, power_map, CorrelationFrame, FrameSet,
        ReturnTable,
    };
    pub use crate::dynamics::{
        build_trajectory, classify_new_frame, forbidden_transition_report, index_return_proxy, transition_counts,
        tridiagonality_score, Classification, IndexReturnSeries, Trajectory, TransitionMatrix,
    };
    pub use crate::geometry::{
        frame_distance, mds_embed, pairwise_distances, Embedding, FrameDistanceMatrix, MdsConfig, MdsInit,
    };
    pub use crate::ingest::{load_prices, load_universe, Instrument, PriceTable};
    pub use crate::synth::{generate_returns, Regime, RegimeSpec};
}
