//! Corpus preparation: video-level splits, train-only normalization
//! statistics, and batch assembly with training-time augmentation.
//!
//! Splits are stratified by scenario and operate on whole videos, so no
//! video contributes windows to more than one split. Normalization combines
//! corpus z-scoring with per-video mean removal; since both are per-channel
//! affine maps, they fuse into `(x − video_mean) / corpus_std`, which is what
//! batch assembly applies. Windows are stored raw so augmentation can act on
//! physical signals (keeping the derived norm channels consistent) before
//! the fused normalization.

use crate::config::{AugmentConfig, DataConfig};
use crate::error::CoreError;
use crate::rng::stream;
use crate::signal::augment::augment_window;
use crate::signal::channels::{
    compute_norm_stats, ChannelizedSequence, NormStats, N_CHANNELS,
};
use crate::signal::window::{assemble_sequences, segment_windows, SequenceSample};
use crate::train::Batch;
use ndarray::{ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Video ids assigned to each split (sorted within each split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitVideos {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitVideos {
    pub fn of(&self, video_id: &str) -> Option<&'static str> {
        if self.train.binary_search_by(|v| v.as_str().cmp(video_id)).is_ok() {
            Some("train")
        } else if self.val.binary_search_by(|v| v.as_str().cmp(video_id)).is_ok() {
            Some("val")
        } else if self.test.binary_search_by(|v| v.as_str().cmp(video_id)).is_ok() {
            Some("test")
        } else {
            None
        }
    }
}

/// Largest-remainder apportionment of `n` items over three fractions
/// (summing to 1); ties go to the earlier part.
fn allocate(n: usize, fracs: [f64; 3]) -> [usize; 3] {
    let exact = fracs.map(|f| f * n as f64);
    let mut parts = exact.map(|e| e.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - parts[a] as f64, exact[b] - parts[b] as f64);
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let deficit = n - parts.iter().sum::<usize>();
    for &part in order.iter().take(deficit) {
        parts[part] += 1;
    }
    parts
}

/// Assign whole videos to train/val/test, stratified by scenario.
///
/// Within each scenario the (sorted) video ids are shuffled by a
/// scenario-scoped stream of `seed`, then apportioned by largest remainder
/// over (train_frac, val_frac, rest). Duplicate video ids or an empty split
/// are errors.
pub fn split_by_video(
    corpus: &[ChannelizedSequence],
    cfg: &DataConfig,
    seed: u64,
) -> Result<SplitVideos, CoreError> {
    if !(cfg.train_frac > 0.0 && cfg.val_frac > 0.0 && cfg.train_frac + cfg.val_frac < 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "split fractions train={} val={} must be positive and sum below 1",
            cfg.train_frac, cfg.val_frac
        )));
    }
    let mut seen = BTreeSet::new();
    let mut by_scenario: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for seq in corpus {
        if !seen.insert(seq.video_id.clone()) {
            return Err(CoreError::InvalidData(format!(
                "duplicate video id {}",
                seq.video_id
            )));
        }
        by_scenario
            .entry(seq.scenario.index())
            .or_default()
            .push(seq.video_id.clone());
    }
    let mut splits = SplitVideos {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (scenario_idx, mut ids) in by_scenario {
        ids.sort();
        let scenario = crate::taxonomy::Scenario::from_index(scenario_idx).unwrap();
        let mut rng = stream(seed, &format!("split/{}", scenario.name()));
        ids.shuffle(&mut rng);
        let n = ids.len();
        let [n_train, n_val, _] = allocate(
            n,
            [
                cfg.train_frac,
                cfg.val_frac,
                1.0 - cfg.train_frac - cfg.val_frac,
            ],
        );
        splits.train.extend_from_slice(&ids[..n_train]);
        splits.val.extend_from_slice(&ids[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&ids[n_train + n_val..]);
    }
    for list in [&mut splits.train, &mut splits.val, &mut splits.test] {
        list.sort();
    }
    if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
        return Err(CoreError::InvalidConfig(format!(
            "empty split (train {} / val {} / test {} videos); need more videos \
             or different fractions",
            splits.train.len(),
            splits.val.len(),
            splits.test.len()
        )));
    }
    Ok(splits)
}

/// A split, windowed corpus ready for batching. Window data is raw; the
/// normalization folded in at batch time is `(x − video_mean) / corpus_std`
/// with statistics from the training videos only.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub splits: SplitVideos,
    pub stats: NormStats,
    pub video_means: BTreeMap<String, [f64; N_CHANNELS]>,
}

pub fn prepare_corpus(
    corpus: &[ChannelizedSequence],
    cfg: &DataConfig,
    seq_len: usize,
    seed: u64,
) -> Result<PreparedCorpus, CoreError> {
    let splits = split_by_video(corpus, cfg, seed)?;
    let in_split = |ids: &[String], seq: &&ChannelizedSequence| {
        ids.binary_search_by(|v| v.as_str().cmp(&seq.video_id)).is_ok()
    };
    let train_seqs: Vec<&ChannelizedSequence> =
        corpus.iter().filter(|s| in_split(&splits.train, s)).collect();
    let stats = compute_norm_stats(train_seqs.iter().copied(), cfg.std_floor)?;

    let mut video_means = BTreeMap::new();
    for seq in corpus {
        let t = seq.len() as f64;
        let mut mean = [0.0; N_CHANNELS];
        for (c, m) in mean.iter_mut().enumerate() {
            *m = seq.channels.row(c).sum() / t;
        }
        video_means.insert(seq.video_id.clone(), mean);
    }

    let windowed = |ids: &[String]| -> Vec<SequenceSample> {
        corpus
            .iter()
            .filter(|s| in_split(ids, s))
            .flat_map(|seq| {
                let windows =
                    segment_windows(seq, cfg.window_len, cfg.window_stride, cfg.min_overlap);
                assemble_sequences(&seq.video_id, &windows, seq_len)
            })
            .collect()
    };
    Ok(PreparedCorpus {
        train: windowed(&splits.train),
        val: windowed(&splits.val),
        test: windowed(&splits.test),
        splits,
        stats,
        video_means,
    })
}

impl PreparedCorpus {
    /// Assemble the selected samples into a model batch without augmentation
    /// (evaluation path).
    pub fn batch(&self, samples: &[SequenceSample], idx: &[usize]) -> Result<Batch, CoreError> {
        self.build::<rand_chacha::ChaCha8Rng>(samples, idx, None)
    }

    /// Assemble with augmentation applied to every window (training path).
    /// Augmentation draws come from `rng` in sample-then-window order.
    pub fn batch_augmented<R: Rng>(
        &self,
        samples: &[SequenceSample],
        idx: &[usize],
        aug: &AugmentConfig,
        rng: &mut R,
    ) -> Result<Batch, CoreError> {
        self.build(samples, idx, Some((aug, rng)))
    }

    fn build<R: Rng>(
        &self,
        samples: &[SequenceSample],
        idx: &[usize],
        mut aug: Option<(&AugmentConfig, &mut R)>,
    ) -> Result<Batch, CoreError> {
        let first = idx
            .first()
            .and_then(|&i| samples.get(i))
            .ok_or_else(|| CoreError::InvalidData("empty batch selection".into()))?;
        let s = first.windows.len();
        let t = first.windows[0].data.ncols();
        let mut windows = ArrayD::zeros(IxDyn(&[idx.len() * s, t, N_CHANNELS]));
        let mut scenario = Vec::with_capacity(idx.len());
        let mut action = Vec::with_capacity(idx.len() * s);
        let mut action_weight = Vec::with_capacity(idx.len() * s);
        for (bi, &i) in idx.iter().enumerate() {
            let sample = samples
                .get(i)
                .ok_or_else(|| CoreError::InvalidData(format!("sample index {i} out of range")))?;
            if sample.windows.len() != s {
                return Err(CoreError::shape(
                    "batch assembly",
                    format!("{s} windows per sequence"),
                    format!("{}", sample.windows.len()),
                ));
            }
            let mean = self.video_means.get(&sample.video_id).ok_or_else(|| {
                CoreError::InvalidData(format!("no normalization entry for {}", sample.video_id))
            })?;
            scenario.push(sample.scenario.index());
            for (si, w) in sample.windows.iter().enumerate() {
                let w = match aug.as_mut() {
                    Some((acfg, rng)) => augment_window(w, acfg, &mut **rng),
                    None => w.clone(),
                };
                let row = bi * s + si;
                for ti in 0..t {
                    for c in 0..N_CHANNELS {
                        windows[[row, ti, c]] =
                            (w.data[[c, ti]] - mean[c]) / self.stats.std[c];
                    }
                }
                action.push(w.action.map(|a| a.index()).unwrap_or(0));
                action_weight.push(if w.action.is_some() { w.weight } else { 0.0 });
            }
        }
        Ok(Batch {
            windows,
            scenario,
            action,
            action_weight,
        })
    }
}

/// Summary of a prepared corpus: split membership, normalization constants,
/// and per-split label counts. Serialized as the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config_hash: String,
    pub splits: SplitVideos,
    pub stats: NormStats,
    /// Split → assembled sequence count.
    pub sequences: BTreeMap<String, usize>,
    /// Split → action class name (or "Unlabeled") → window count.
    pub window_labels: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn build_manifest(p: &PreparedCorpus, seed: u64, config_hash: &str) -> CorpusManifest {
    let mut sequences = BTreeMap::new();
    let mut window_labels = BTreeMap::new();
    for (name, samples) in [("train", &p.train), ("val", &p.val), ("test", &p.test)] {
        sequences.insert(name.to_string(), samples.len());
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for sample in samples {
            for w in &sample.windows {
                let key = match w.action {
                    Some(a) => a.name().to_string(),
                    None => "Unlabeled".to_string(),
                };
                *counts.entry(key).or_default() += 1;
            }
        }
        window_labels.insert(name.to_string(), counts);
    }
    CorpusManifest {
        seed,
        config_hash: config_hash.to_string(),
        splits: p.splits.clone(),
        stats: p.stats.clone(),
        sequences,
        window_labels,
    }
}
