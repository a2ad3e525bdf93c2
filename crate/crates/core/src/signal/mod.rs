//! Signal pipeline: channel derivation, normalization, windowing,
//! augmentation, synthetic corpus generation, and raw/label file formats.
//!
//! The pipeline runs raw 6-channel IMU (3-axis accelerometer + 3-axis
//! gyroscope) through a fixed sequence of steps:
//!
//! 1. [`derive_channels`] appends per-timestep accelerometer and gyroscope
//!    magnitudes, giving the 8-channel representation used everywhere else.
//! 2. [`compute_norm_stats`] / [`normalize_sequence`] apply corpus z-scoring
//!    followed by per-video mean centering.
//! 3. [`segment_windows`] cuts sliding windows and assigns each the majority
//!    span label when its overlap clears the threshold.
//! 4. [`assemble_sequences`] groups consecutive windows into fixed-length
//!    model inputs.
//!
//! [`augment_window`] perturbs training windows (rotation, scaling, jitter,
//! masking); [`synth_generate`] renders the labeled synthetic corpus used by
//! the end-to-end tests and examples.

pub mod augment;
pub mod channels;
pub mod io;
pub mod synth;
pub mod window;

pub use augment::{augment_window, random_rotation, standard_normal};
pub use channels::{
    apply_stats, center, compute_norm_stats, derive_channels, normalize_sequence, ActionSpan,
    ChannelizedSequence, NormStats, CH_ACC_NORM, CH_GYRO_NORM, N_CHANNELS, RAW_CHANNEL_NAMES,
};
pub use io::{
    build_sequence, read_labels, read_raw, spans_to_records, write_labels, write_raw,
    LabelRecord,
};
pub use synth::{
    scenario_rates, synth_generate, synth_generate_with, transition_matrix_for,
    validate_transitions, ClassRates, ARCHETYPE_OF, TRANSITIONS,
};
pub use window::{
    assemble_corpus, assemble_sequences, segment_windows, SequenceSample, Window,
};
