//! Corpus loading shared by the pipeline subcommands: a directory of
//! per-video raw recordings plus a span-label JSONL file.

use anyhow::{bail, Context as _, Result};
use harkit_core::signal::{build_sequence, read_labels, read_raw, ChannelizedSequence, LabelRecord};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::path::Path;

/// Group label records by video id, preserving each video's record order.
pub fn group_records(records: Vec<LabelRecord>) -> BTreeMap<String, Vec<LabelRecord>> {
    let mut by_video: BTreeMap<String, Vec<LabelRecord>> = BTreeMap::new();
    for rec in records {
        by_video.entry(rec.video_id.clone()).or_default().push(rec);
    }
    by_video
}

/// Read one video's recording, trying the supported extensions.
pub fn read_video(imu: &Path, video_id: &str) -> Result<Array2<f64>> {
    for ext in ["csv", "bin"] {
        let path = imu.join(format!("{video_id}.{ext}"));
        if path.exists() {
            return Ok(read_raw(&path)?);
        }
    }
    bail!(
        "no recording {video_id}.csv or {video_id}.bin in {}",
        imu.display()
    )
}

/// Assemble every labeled video into a channelized sequence, sorted by id.
pub fn load_corpus(
    imu: &Path,
    labels: &Path,
    sample_rate: f64,
) -> Result<Vec<ChannelizedSequence>> {
    let records = read_labels(labels)
        .with_context(|| format!("reading labels {}", labels.display()))?;
    let by_video = group_records(records);
    if by_video.is_empty() {
        bail!("labels file {} has no records", labels.display());
    }
    let mut corpus = Vec::with_capacity(by_video.len());
    for (video_id, recs) in &by_video {
        let raw = read_video(imu, video_id)?;
        corpus.push(
            build_sequence(video_id, sample_rate, &raw, recs)
                .with_context(|| format!("assembling video {video_id}"))?,
        );
    }
    Ok(corpus)
}

/// Duration map for exactly the given video ids, read from raw recordings.
pub fn durations_from_raw(
    imu: &Path,
    video_ids: impl IntoIterator<Item = String>,
    sample_rate: f64,
) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for video_id in video_ids {
        if map.contains_key(&video_id) {
            continue;
        }
        let raw = read_video(imu, &video_id)?;
        map.insert(video_id, raw.ncols() as f64 / sample_rate);
    }
    Ok(map)
}
