//! Behavioral analysis of labeled window streams and trained models.
//!
//! Everything here is model-agnostic except the embedding export:
//!
//! * [`features`] — hand-crafted per-window statistics,
//! * [`knn`] — a group-aware nearest-neighbor baseline over those features,
//! * [`stats`] — two-sample tests (Gaussian Bhattacharyya, MMD permutation),
//! * [`separability`] — pairwise class-distribution comparisons,
//! * [`transitions`] — empirical action-transition matrices,
//! * [`embed`] — CSV export of learned embeddings for external tooling.

pub mod embed;
pub mod features;
pub mod knn;
pub mod separability;
pub mod stats;
pub mod transitions;

pub use embed::export_embeddings;
pub use features::{extract_features, feature_names, spectrum_summary, N_FEATURES};
pub use knn::{knn_ceiling, KnnCeiling};
pub use separability::{separability_matrix, SeparabilityReport};
pub use stats::{
    bhattacharyya_gaussian, median_bandwidth, mmd2_unbiased, mmd_permutation_test, MmdTest,
};
pub use transitions::{transition_matrix, TransitionMatrix};
