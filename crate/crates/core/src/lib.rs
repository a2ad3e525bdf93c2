//! Behavioral activity recognition for head-mounted IMU streams.
//!
//! The crate is organized as a pipeline:
//!
//! * [`signal`] — channel derivation, normalization, windowing, augmentation,
//!   and a synthetic corpus generator for end-to-end verification.
//! * [`model`] — a two-stage encoder (per-window convolutional/recurrent
//!   encoder feeding a sequence transformer) with scenario and gated
//!   per-window action heads, built on the [`ad`] reverse-mode tape.
//! * [`train`] — focal/multi-task losses, AdamW with EMA shadow weights,
//!   cosine schedule, the training loop, and evaluation metrics.
//! * [`analysis`] — distributional separability (Bhattacharyya, MMD with
//!   permutation tests), transition-structure estimation, and a classical
//!   KNN ceiling harness.
//! * [`datapipe`] — the annotation curation pipeline: narration
//!   normalization, deduplication, quota subsampling, review tiers, label
//!   propagation, and coverage accounting.
//!
//! Everything is deterministic given a master seed: RNG streams are derived
//! per unit of work (see [`rng`]), collections iterate in sorted order, and
//! all serialized outputs are byte-stable.

pub mod ad;
pub mod analysis;
pub mod config;
pub mod datapipe;
pub mod dataset;
pub mod error;
pub mod model;
pub mod rng;
pub mod signal;
pub mod taxonomy;
pub mod train;

pub use error::CoreError;
pub use taxonomy::{ActionClass, Scenario};
