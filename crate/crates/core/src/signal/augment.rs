//! Training-time window augmentation.
//!
//! Transforms apply in a fixed order — shared 3D rotation, uniform scale,
//! additive jitter, temporal mask — and the norm channels are recomputed
//! after the geometric transforms so they stay consistent with the rotated
//! and scaled raw channels. Draw order from the RNG is fixed and disabled
//! transforms draw nothing, so a given (seed, config) pair always produces
//! the same window.

use super::channels::{CH_ACC_NORM, CH_GYRO_NORM};
use super::window::Window;
use crate::config::AugmentConfig;
use rand::Rng;

/// Standard normal via Box–Muller on two uniform draws.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Rotation matrix for a uniformly random axis and an angle uniform in
/// [−max_angle, max_angle] radians (Rodrigues form).
pub fn random_rotation<R: Rng>(rng: &mut R, max_angle: f64) -> [[f64; 3]; 3] {
    let axis = loop {
        let v = [
            standard_normal(rng),
            standard_normal(rng),
            standard_normal(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            break [v[0] / n, v[1] / n, v[2] / n];
        }
    };
    let angle = rng.gen_range(-max_angle..=max_angle);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Apply the configured augmentation chain to one window.
pub fn augment_window<R: Rng>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Window {
    let mut out = w.clone();
    if !cfg.enabled {
        return out;
    }
    let t_len = out.data.ncols();
    let mut geometric = false;

    if cfg.rotation && cfg.rotation_deg > 0.0 {
        let r = random_rotation(rng, cfg.rotation_deg.to_radians());
        for base in [0, 3] {
            for i in 0..t_len {
                let v = [
                    out.data[[base, i]],
                    out.data[[base + 1, i]],
                    out.data[[base + 2, i]],
                ];
                for row in 0..3 {
                    out.data[[base + row, i]] =
                        r[row][0] * v[0] + r[row][1] * v[1] + r[row][2] * v[2];
                }
            }
        }
        geometric = true;
    }

    if cfg.scaling && (cfg.scale_lo, cfg.scale_hi) != (1.0, 1.0) {
        let s = rng.gen_range(cfg.scale_lo..=cfg.scale_hi);
        for c in 0..6 {
            out.data.row_mut(c).mapv_inplace(|v| v * s);
        }
        geometric = true;
    }

    if geometric {
        for i in 0..t_len {
            let an = (0..3).map(|c| out.data[[c, i]].powi(2)).sum::<f64>().sqrt();
            let gn = (3..6).map(|c| out.data[[c, i]].powi(2)).sum::<f64>().sqrt();
            out.data[[CH_ACC_NORM, i]] = an;
            out.data[[CH_GYRO_NORM, i]] = gn;
        }
    }

    if cfg.jitter && cfg.jitter_sigma > 0.0 {
        for c in 0..out.data.nrows() {
            for i in 0..t_len {
                out.data[[c, i]] += cfg.jitter_sigma * standard_normal(rng);
            }
        }
    }

    if cfg.masking && cfg.mask_prob > 0.0 && rng.gen::<f64>() < cfg.mask_prob {
        let len = rng.gen_range(cfg.mask_min..=cfg.mask_max).min(t_len);
        let start = rng.gen_range(0..=t_len - len);
        for c in 0..out.data.nrows() {
            for i in start..start + len {
                out.data[[c, i]] = 0.0;
            }
        }
    }

    out
}
