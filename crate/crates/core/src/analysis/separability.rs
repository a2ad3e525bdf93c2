//! Pairwise class-separability report over raw signal windows.
//!
//! For every action class the analysis samples per-timestep channel vectors
//! from labeled windows, then scores every class pair with a Gaussian
//! Bhattacharyya distance and an MMD permutation test (Bonferroni-corrected
//! across the pairs actually tested). Classes with too few vectors to fit a
//! covariance are skipped rather than scored on noise.

use crate::config::AnalyzeConfig;
use crate::error::CoreError;
use crate::rng::{stream, stream_n};
use crate::signal::{Window, N_CHANNELS};
use crate::taxonomy::ActionClass;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{bhattacharyya_gaussian, mmd_permutation_test};

const N: usize = ActionClass::COUNT;

/// Symmetric pairwise separability scores. Cells touching a skipped class
/// hold neutral values (distance 0, p 1) and are never significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    /// Class names indexing the matrix axes.
    pub classes: Vec<String>,
    /// Vectors actually sampled per class.
    pub n_vectors: [usize; N],
    /// True where a class had too few vectors to test.
    pub skipped: [bool; N],
    pub bhattacharyya: [[f64; N]; N],
    pub mmd2: [[f64; N]; N],
    pub p_raw: [[f64; N]; N],
    pub p_corrected: [[f64; N]; N],
    /// `p_corrected < 0.05` for a tested pair.
    pub significant: [[bool; N]; N],
    /// Number of pairs the Bonferroni factor covered.
    pub pairs_tested: usize,
}

/// Sample up to `max_vectors` per-timestep channel vectors from the class's
/// windows: windows are shuffled, then each contributes `per_window` columns
/// drawn uniformly with replacement.
fn sample_vectors<R: Rng>(
    windows: &[&Window],
    per_window: usize,
    max_vectors: usize,
    rng: &mut R,
) -> Array2<f64> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(rng);
    let mut rows: Vec<[f64; N_CHANNELS]> = Vec::with_capacity(max_vectors);
    'outer: for &wi in &order {
        let w = windows[wi];
        let len = w.data.ncols();
        for _ in 0..per_window {
            if rows.len() == max_vectors {
                break 'outer;
            }
            let t = rng.gen_range(0..len);
            let mut v = [0.0; N_CHANNELS];
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = w.data[[c, t]];
            }
            rows.push(v);
        }
    }
    let mut out = Array2::zeros((rows.len(), N_CHANNELS));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    out
}

/// Score every action-class pair on a pool of labeled windows.
///
/// Windows with no label or non-positive weight are ignored. Errors if
/// fewer than two classes have enough vectors (more than one per feature
/// dimension) to support a test.
pub fn separability_matrix(
    windows: &[Window],
    cfg: &AnalyzeConfig,
    seed: u64,
) -> Result<SeparabilityReport, CoreError> {
    if cfg.mmd_timesteps_per_window == 0 || cfg.mmd_max_per_class < 2 {
        return Err(CoreError::InvalidConfig(
            "separability sampling needs timesteps ≥ 1 and a cap ≥ 2".into(),
        ));
    }
    let mut by_class: [Vec<&Window>; N] = Default::default();
    for w in windows {
        if let Some(a) = w.action {
            if w.weight > 0.0 {
                by_class[a.index()].push(w);
            }
        }
    }
    let mut vectors: Vec<Array2<f64>> = Vec::with_capacity(N);
    let mut n_vectors = [0usize; N];
    let mut skipped = [false; N];
    for (c, class_windows) in by_class.iter_mut().enumerate() {
        let name = ActionClass::from_index(c).unwrap().name();
        let mut rng = stream(seed, &format!("separability/windows/{name}"));
        class_windows.truncate(cfg.per_class_cap.max(1));
        let v = sample_vectors(
            class_windows,
            cfg.mmd_timesteps_per_window,
            cfg.mmd_max_per_class,
            &mut rng,
        );
        n_vectors[c] = v.nrows();
        skipped[c] = v.nrows() <= N_CHANNELS;
        vectors.push(v);
    }
    let usable = skipped.iter().filter(|s| !**s).count();
    if usable < 2 {
        return Err(CoreError::InvalidData(format!(
            "separability needs at least two classes with more than {N_CHANNELS} vectors, got {usable}"
        )));
    }
    let pairs_tested = usable * (usable - 1) / 2;

    let mut bhattacharyya = [[0.0; N]; N];
    let mut mmd2 = [[0.0; N]; N];
    let mut p_raw = [[1.0; N]; N];
    let mut p_corrected = [[1.0; N]; N];
    let mut significant = [[false; N]; N];
    let mut pair_idx = 0u64;
    for i in 0..N {
        for j in i + 1..N {
            // Stable per-pair index keeps seeds fixed even when other
            // classes drop out of the pool.
            let this_pair = pair_idx;
            pair_idx += 1;
            if skipped[i] || skipped[j] {
                continue;
            }
            let d = bhattacharyya_gaussian(vectors[i].view(), vectors[j].view(), cfg.cov_reg)?;
            let pair_seed = stream_n(seed, "separability/perm", this_pair).gen::<u64>();
            let t = mmd_permutation_test(
                vectors[i].view(),
                vectors[j].view(),
                cfg.permutations,
                pairs_tested,
                pair_seed,
            );
            bhattacharyya[i][j] = d;
            bhattacharyya[j][i] = d;
            mmd2[i][j] = t.mmd2;
            mmd2[j][i] = t.mmd2;
            p_raw[i][j] = t.p_raw;
            p_raw[j][i] = t.p_raw;
            p_corrected[i][j] = t.p_corrected;
            p_corrected[j][i] = t.p_corrected;
            let sig = t.p_corrected < 0.05;
            significant[i][j] = sig;
            significant[j][i] = sig;
        }
    }
    Ok(SeparabilityReport {
        classes: ActionClass::ALL.iter().map(|a| a.name().to_string()).collect(),
        n_vectors,
        skipped,
        bhattacharyya,
        mmd2,
        p_raw,
        p_corrected,
        significant,
        pairs_tested,
    })
}
