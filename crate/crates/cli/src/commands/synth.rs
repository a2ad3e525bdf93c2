//! `harkit synth` — render the synthetic corpus to disk.
//!
//! Layout under `--out`:
//!
//! ```text
//! raw/<video_id>.<csv|bin>   one recording per video
//! labels.jsonl               span labels for every video
//! synth.json                 manifest: per-scenario/per-class tallies
//! ```
//!
//! The manifest's window counts use the training windowing from the same
//! config, so recounting windows on the written files reproduces them
//! exactly.

use crate::artifacts::{OutDir, Stamped};
use crate::Context;
use anyhow::{Context as _, Result};
use harkit_core::signal::{
    segment_windows, spans_to_records, synth_generate, write_labels, write_raw,
};
use ndarray::s;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Serialize)]
struct SynthManifest {
    videos: usize,
    duration_s: f64,
    sample_rate: f64,
    format: String,
    /// Scenario name → video count.
    scenario_videos: BTreeMap<String, usize>,
    /// Action name → labeled-span count.
    span_counts: BTreeMap<String, usize>,
    /// Action name (or "Unlabeled") → window count under the training
    /// windowing (`data.window_len` / `data.window_stride`).
    window_counts: BTreeMap<String, usize>,
}

pub fn run(ctx: &Context, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let corpus = synth_generate(&cfg.synth, cfg.seed)?;
    let out = OutDir::create(out)?;
    let raw_dir = out.path("raw");
    fs::create_dir_all(&raw_dir)
        .with_context(|| format!("creating {}", raw_dir.display()))?;

    let mut records = Vec::new();
    let mut scenario_videos: BTreeMap<String, usize> = BTreeMap::new();
    let mut span_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut window_counts: BTreeMap<String, usize> = BTreeMap::new();
    for seq in &corpus {
        let path = raw_dir.join(format!("{}.{}", seq.video_id, cfg.synth.format));
        write_raw(&path, seq.channels.slice(s![0..6, ..]), seq.sample_rate)?;
        *scenario_videos
            .entry(seq.scenario.name().to_string())
            .or_default() += 1;
        for span in &seq.action_spans {
            *span_counts.entry(span.action.name().to_string()).or_default() += 1;
        }
        let windows = segment_windows(
            seq,
            cfg.data.window_len,
            cfg.data.window_stride,
            cfg.data.min_overlap,
        );
        for w in &windows {
            let key = match w.action {
                Some(a) => a.name().to_string(),
                None => "Unlabeled".to_string(),
            };
            *window_counts.entry(key).or_default() += 1;
        }
        records.extend(spans_to_records(seq));
    }
    write_labels(&out.path("labels.jsonl"), &records)?;
    println!("wrote {}", out.path("labels.jsonl").display());

    let manifest = SynthManifest {
        videos: corpus.len(),
        duration_s: cfg.synth.duration_s,
        sample_rate: cfg.synth.sample_rate,
        format: cfg.synth.format.clone(),
        scenario_videos,
        span_counts,
        window_counts,
    };
    out.write_json(
        "synth.json",
        &Stamped::new(&cfg.content_hash(), cfg.seed, manifest),
    )?;
    println!(
        "generated {} videos ({}s at {} Hz) under {}",
        corpus.len(),
        cfg.synth.duration_s,
        cfg.synth.sample_rate,
        out.root().display()
    );
    Ok(())
}
