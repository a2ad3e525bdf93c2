//! Channel derivation and normalization for 8-channel IMU streams.
//!
//! Raw input is 3-axis accelerometer (g) plus 3-axis gyroscope (rad/s);
//! rows 6 and 7 carry the per-timestep L2 norms of each triple, which are
//! invariant to sensor orientation and give the encoder a rotation-stable
//! energy signal.

use crate::error::CoreError;
use crate::taxonomy::{ActionClass, Scenario};
use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub const N_CHANNELS: usize = 8;
pub const CH_ACC_NORM: usize = 6;
pub const CH_GYRO_NORM: usize = 7;
/// Column headers for the six raw channels, in storage order.
pub const RAW_CHANNEL_NAMES: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];

/// One labeled stretch of samples: `[start, end)` in sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpan {
    pub start: usize,
    pub end: usize,
    pub action: ActionClass,
    /// Annotation confidence in [0,1]; scales the training loss.
    pub weight: f64,
}

/// One video's worth of channelized IMU data plus its labels.
#[derive(Debug, Clone)]
pub struct ChannelizedSequence {
    pub video_id: String,
    pub scenario: Scenario,
    pub sample_rate: f64,
    /// 8×T: rows 0–2 accelerometer, 3–5 gyroscope, 6–7 derived norms.
    pub channels: Array2<f64>,
    pub action_spans: Vec<ActionSpan>,
}

impl ChannelizedSequence {
    pub fn len(&self) -> usize {
        self.channels.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.ncols() == 0
    }
}

/// Per-channel pooled statistics used for global z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
}

/// Stack acc and gyro into the 8×T channel layout, appending per-timestep
/// L2 norms of each triple as rows 6 and 7.
pub fn derive_channels(
    acc: ArrayView2<f64>,
    gyro: ArrayView2<f64>,
) -> Result<Array2<f64>, CoreError> {
    if acc.nrows() != 3 || gyro.nrows() != 3 {
        return Err(CoreError::shape(
            "derive_channels",
            "3 rows per sensor",
            &format!("acc {} rows, gyro {} rows", acc.nrows(), gyro.nrows()),
        ));
    }
    let t = acc.ncols();
    if gyro.ncols() != t {
        return Err(CoreError::InvalidData(format!(
            "acc has {t} samples but gyro has {}",
            gyro.ncols()
        )));
    }
    if t == 0 {
        return Err(CoreError::InvalidData("empty sensor stream".into()));
    }
    let mut out = Array2::zeros((N_CHANNELS, t));
    out.slice_mut(s![0..3, ..]).assign(&acc);
    out.slice_mut(s![3..6, ..]).assign(&gyro);
    for i in 0..t {
        let an = (acc[[0, i]].powi(2) + acc[[1, i]].powi(2) + acc[[2, i]].powi(2)).sqrt();
        let gn = (gyro[[0, i]].powi(2) + gyro[[1, i]].powi(2) + gyro[[2, i]].powi(2)).sqrt();
        out[[CH_ACC_NORM, i]] = an;
        out[[CH_GYRO_NORM, i]] = gn;
    }
    Ok(out)
}

/// Pooled per-channel mean and population std over every timestep of every
/// sequence, with std clamped below at `std_floor` so dead channels stay
/// finite under z-scoring. Two-pass for numerical robustness.
pub fn compute_norm_stats<'a, I>(corpus: I, std_floor: f64) -> Result<NormStats, CoreError>
where
    I: IntoIterator<Item = &'a ChannelizedSequence>,
    I::IntoIter: Clone,
{
    let iter = corpus.into_iter();
    let mut n = 0usize;
    let mut sum = [0.0; N_CHANNELS];
    for seq in iter.clone() {
        n += seq.len();
        for c in 0..N_CHANNELS {
            sum[c] += seq.channels.row(c).sum();
        }
    }
    if n == 0 {
        return Err(CoreError::InvalidData(
            "cannot compute normalization statistics on an empty corpus".into(),
        ));
    }
    let mut mean = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        mean[c] = sum[c] / n as f64;
    }
    let mut sq = [0.0; N_CHANNELS];
    for seq in iter {
        for c in 0..N_CHANNELS {
            sq[c] += seq.channels.row(c).iter().map(|&v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let mut std = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        std[c] = (sq[c] / n as f64).sqrt().max(std_floor);
    }
    Ok(NormStats { mean, std })
}

/// Z-score each channel with the pooled statistics.
pub fn apply_stats(channels: &Array2<f64>, stats: &NormStats) -> Array2<f64> {
    let mut out = channels.clone();
    for c in 0..N_CHANNELS {
        let (m, s) = (stats.mean[c], stats.std[c]);
        out.row_mut(c).mapv_inplace(|v| (v - m) / s);
    }
    out
}

/// Subtract each channel's own mean over this video.
pub fn center(channels: &Array2<f64>) -> Array2<f64> {
    let mut out = channels.clone();
    let t = out.ncols() as f64;
    for c in 0..N_CHANNELS {
        let m = out.row(c).sum() / t;
        out.row_mut(c).mapv_inplace(|v| v - m);
    }
    out
}

/// Global z-scoring followed by per-video centering. The returned sequence
/// keeps labels and metadata; only the channel matrix changes.
pub fn normalize_sequence(seq: &ChannelizedSequence, stats: &NormStats) -> ChannelizedSequence {
    ChannelizedSequence {
        channels: center(&apply_stats(&seq.channels, stats)),
        ..seq.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn seq_from(channels: Array2<f64>) -> ChannelizedSequence {
        ChannelizedSequence {
            video_id: "t".into(),
            scenario: Scenario::Cooking,
            sample_rate: 50.0,
            channels,
            action_spans: vec![],
        }
    }

    fn random_raw(t: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = crate::rng::stream(seed, "channels/test");
        let acc = Array2::from_shape_fn((3, t), |_| rng.gen_range(-2.0..2.0));
        let gyro = Array2::from_shape_fn((3, t), |_| rng.gen_range(-2.0..2.0));
        (acc, gyro)
    }

    #[test]
    fn pythagorean_norms() {
        let acc = Array2::from_shape_vec((3, 1), vec![3.0, 4.0, 0.0]).unwrap();
        let gyro = Array2::zeros((3, 1));
        let ch = derive_channels(acc.view(), gyro.view()).unwrap();
        assert_eq!(ch[[CH_ACC_NORM, 0]], 5.0);
        assert_eq!(ch[[CH_GYRO_NORM, 0]], 0.0);
        assert_eq!(ch.shape(), &[8, 1]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let ch = derive_channels(Array2::zeros((3, 7)).view(), Array2::zeros((3, 7)).view()).unwrap();
        assert!(ch.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norms_match_brute_force() {
        let (acc, gyro) = random_raw(64, 1);
        let ch = derive_channels(acc.view(), gyro.view()).unwrap();
        for i in 0..64 {
            let an: f64 = (0..3).map(|a| acc[[a, i]] * acc[[a, i]]).sum::<f64>().sqrt();
            let gn: f64 = (0..3).map(|a| gyro[[a, i]] * gyro[[a, i]]).sum::<f64>().sqrt();
            assert!((ch[[CH_ACC_NORM, i]] - an).abs() < 1e-9);
            assert!((ch[[CH_GYRO_NORM, i]] - gn).abs() < 1e-9);
            for a in 0..3 {
                assert_eq!(ch[[a, i]], acc[[a, i]]);
                assert_eq!(ch[[3 + a, i]], gyro[[a, i]]);
            }
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let acc = Array2::zeros((3, 5));
        let gyro = Array2::zeros((3, 6));
        assert!(derive_channels(acc.view(), gyro.view()).is_err());
        assert!(derive_channels(Array2::zeros((2, 5)).view(), Array2::zeros((3, 5)).view()).is_err());
    }

    #[test]
    fn norms_invariant_under_shared_rotation() {
        // Rotate both triples by the same rotation; rows 6–7 must not move.
        let (acc, gyro) = random_raw(32, 2);
        let base = derive_channels(acc.view(), gyro.view()).unwrap();
        let mut rng = crate::rng::stream(3, "channels/rot");
        for _ in 0..5 {
            let r = crate::signal::augment::random_rotation(&mut rng, std::f64::consts::PI);
            let rot = |m: &Array2<f64>| {
                let mut out = m.clone();
                for i in 0..m.ncols() {
                    let v = [m[[0, i]], m[[1, i]], m[[2, i]]];
                    for row in 0..3 {
                        out[[row, i]] = r[row][0] * v[0] + r[row][1] * v[1] + r[row][2] * v[2];
                    }
                }
                out
            };
            let ch = derive_channels(rot(&acc).view(), rot(&gyro).view()).unwrap();
            for i in 0..32 {
                assert!((ch[[CH_ACC_NORM, i]] - base[[CH_ACC_NORM, i]]).abs() < 1e-6);
                assert!((ch[[CH_GYRO_NORM, i]] - base[[CH_GYRO_NORM, i]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stats_degenerate_and_two_point_cases() {
        // Constant channel: mean = constant, std clamped to the floor.
        let mut ch = Array2::zeros((8, 10));
        ch.row_mut(0).fill(3.5);
        let stats = compute_norm_stats([&seq_from(ch)], 1e-6).unwrap();
        assert_eq!(stats.mean[0], 3.5);
        assert_eq!(stats.std[0], 1e-6);

        // Two sequences contributing {0} and {2} on channel 1: population
        // mean 1, population std 1.
        let mut a = Array2::zeros((8, 1));
        a[[1, 0]] = 0.0;
        let mut b = Array2::zeros((8, 1));
        b[[1, 0]] = 2.0;
        let (sa, sb) = (seq_from(a), seq_from(b));
        let stats = compute_norm_stats([&sa, &sb], 1e-6).unwrap();
        assert!((stats.mean[1] - 1.0).abs() < 1e-12);
        assert!((stats.std[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_match_one_pass_oracle() {
        let seqs: Vec<ChannelizedSequence> = (0..4)
            .map(|k| {
                let (acc, gyro) = random_raw(40 + 7 * k, 10 + k as u64);
                seq_from(derive_channels(acc.view(), gyro.view()).unwrap())
            })
            .collect();
        let stats = compute_norm_stats(seqs.iter(), 1e-6).unwrap();

        // Independent single-pass sum/sum-of-squares accumulation.
        let mut n = 0.0;
        let mut sum = [0.0; 8];
        let mut sumsq = [0.0; 8];
        for s in &seqs {
            n += s.len() as f64;
            for c in 0..8 {
                for &v in s.channels.row(c) {
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            }
        }
        for c in 0..8 {
            let mean = sum[c] / n;
            let var = sumsq[c] / n - mean * mean;
            assert!((stats.mean[c] - mean).abs() < 1e-9);
            assert!((stats.std[c] - var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(compute_norm_stats([], 1e-6).is_err());
    }

    #[test]
    fn normalization_centers_and_unit_scales() {
        let seqs: Vec<ChannelizedSequence> = (0..3)
            .map(|k| {
                let (acc, gyro) = random_raw(200, 20 + k as u64);
                seq_from(derive_channels(acc.view(), gyro.view()).unwrap())
            })
            .collect();
        let stats = compute_norm_stats(seqs.iter(), 1e-6).unwrap();

        // Z-scoring alone brings pooled std to 1 and pooled mean to 0.
        let scored: Vec<ChannelizedSequence> = seqs
            .iter()
            .map(|s| ChannelizedSequence {
                channels: apply_stats(&s.channels, &stats),
                ..s.clone()
            })
            .collect();
        let restats = compute_norm_stats(scored.iter(), 1e-12).unwrap();
        for c in 0..8 {
            assert!(restats.mean[c].abs() < 1e-9);
            assert!((restats.std[c] - 1.0).abs() < 1e-9);
        }

        // Full normalization leaves every per-video channel mean at 0.
        for s in &seqs {
            let norm = normalize_sequence(s, &stats);
            for c in 0..8 {
                let m = norm.channels.row(c).sum() / norm.len() as f64;
                assert!(m.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn centering_is_idempotent_and_identity_stats_are_transparent() {
        let (acc, gyro) = random_raw(100, 30);
        let seq = seq_from(derive_channels(acc.view(), gyro.view()).unwrap());
        let once = center(&seq.channels);
        let twice = center(&once);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-9);
        }

        // Identity stats on an already-centered video change nothing.
        let id = NormStats {
            mean: [0.0; 8],
            std: [1.0; 8],
        };
        let centered = seq_from(once.clone());
        let normed = normalize_sequence(&centered, &id);
        for (a, b) in normed.channels.iter().zip(once.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
