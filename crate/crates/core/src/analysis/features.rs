//! Per-window statistical features for the classical per-window ceiling.
//!
//! 42 features per window: for each of the 8 channels — mean, standard
//! deviation, min, max, and mean absolute successive difference (40 total);
//! plus the dominant non-DC frequency and the spectral energy of the
//! accelerometer-norm channel (2 more). The spectral pair uses a direct DFT
//! of the mean-removed signal; energy is scaled so a pure sinusoid of
//! amplitude `A` scores `A²/2` (its variance).

use crate::signal::channels::{CH_ACC_NORM, N_CHANNELS};
use crate::signal::window::Window;
use std::f64::consts::TAU;

pub const N_FEATURES: usize = 42;

const PER_CHANNEL: [&str; 5] = ["mean", "std", "min", "max", "masd"];

/// Feature names in vector order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_FEATURES);
    for c in 0..N_CHANNELS {
        for stat in PER_CHANNEL {
            names.push(format!("ch{c}_{stat}"));
        }
    }
    names.push("acc_norm_dom_freq_hz".into());
    names.push("acc_norm_spectral_energy".into());
    names
}

/// Dominant non-DC frequency (Hz) and total non-DC spectral energy of `x`.
pub fn spectrum_summary(x: &[f64], sample_rate: f64) -> (f64, f64) {
    let t = x.len();
    if t < 2 {
        return (0.0, 0.0);
    }
    let mean = x.iter().sum::<f64>() / t as f64;
    let mut best_k = 0usize;
    let mut best_power = 0.0f64;
    let mut energy = 0.0f64;
    for k in 1..=t / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &v) in x.iter().enumerate() {
            let ang = TAU * k as f64 * n as f64 / t as f64;
            re += (v - mean) * ang.cos();
            im -= (v - mean) * ang.sin();
        }
        let power = re * re + im * im;
        energy += power;
        if power > best_power {
            best_power = power;
            best_k = k;
        }
    }
    let freq = if best_power > 0.0 {
        best_k as f64 * sample_rate / t as f64
    } else {
        0.0
    };
    (freq, energy * 2.0 / (t as f64 * t as f64))
}

/// Extract the 42-feature summary of one window.
pub fn extract_features(w: &Window, sample_rate: f64) -> [f64; N_FEATURES] {
    let t = w.data.ncols();
    assert!(t > 0, "empty window");
    let mut out = [0.0; N_FEATURES];
    let mut i = 0;
    for c in 0..N_CHANNELS {
        let row = w.data.row(c);
        let mean = row.sum() / t as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let masd = if t > 1 {
            row.iter()
                .zip(row.iter().skip(1))
                .map(|(a, b)| (b - a).abs())
                .sum::<f64>()
                / (t - 1) as f64
        } else {
            0.0
        };
        out[i] = mean;
        out[i + 1] = var.sqrt();
        out[i + 2] = min;
        out[i + 3] = max;
        out[i + 4] = masd;
        i += 5;
    }
    let acc_norm: Vec<f64> = w.data.row(CH_ACC_NORM).to_vec();
    let (freq, energy) = spectrum_summary(&acc_norm, sample_rate);
    out[i] = freq;
    out[i + 1] = energy;
    out
}
