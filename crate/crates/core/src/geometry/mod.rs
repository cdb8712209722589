//! Frame distances and low-dimensional embedding.

pub mod distance;
pub mod mds;

pub use distance::{frame_distance, pairwise_distances, pairwise_distances_with_progress, FrameDistanceMatrix};
pub use mds::{classical_mds, mds_embed, raw_stress, smacof_run, Embedding, MdsConfig, MdsInit, SmacofRun};
