//! `harkit prepare` — derive effective span labels, window the corpus, and
//! write the split manifest.
//!
//! Two label sources are supported (exactly one must be given):
//!
//! * `--labels`: span records used as-is.
//! * `--annotations`: timestamped annotation records; the curation pipeline
//!   runs first (tier assignment → label propagation → coverage/conflict
//!   accounting) and each positive-weight record becomes a span centered on
//!   its timestamp, clipped to the video.
//!
//! Outputs: `labels.jsonl` (the effective spans, canonically ordered),
//! `manifest.json` (splits, normalization statistics, per-split label
//! tallies), and for the annotation path `propagation.json`,
//! `coverage.json`, `conflicts.csv`, and `pairs.csv`.

use crate::artifacts::{Csv, OutDir, Stamped};
use crate::corpus::{durations_from_raw, group_records, read_video};
use crate::{Context, PrepareArgs};
use anyhow::{bail, Context as _, Result};
use harkit_core::datapipe::{
    annotations_to_spans, apply_propagation, apply_tiers, coverage_and_conflicts,
    propagate_labels, read_annotations, AnnotationRecord, CoverageReport, PropagationReport,
};
use harkit_core::dataset::{build_manifest, prepare_corpus, SplitVideos};
use harkit_core::signal::{build_sequence, write_labels, LabelRecord};
use std::collections::BTreeSet;

pub fn run(ctx: &Context, args: &PrepareArgs) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(&args.out)?;
    let hash = cfg.content_hash();

    let mut effective: Vec<LabelRecord> = match (&args.labels, &args.annotations) {
        (Some(labels), None) => harkit_core::signal::read_labels(labels)
            .with_context(|| format!("reading labels {}", labels.display()))?,
        (None, Some(annotations)) => {
            let records = read_annotations(annotations)
                .with_context(|| format!("reading annotations {}", annotations.display()))?;
            let (spans, propagation, coverage) = curate(ctx, &args.imu, records)?;
            out.write_json("propagation.json", &Stamped::new(&hash, cfg.seed, propagation))?;
            write_coverage(&out, &hash, cfg.seed, &coverage)?;
            spans
        }
        _ => bail!("exactly one of --labels and --annotations is required"),
    };
    effective.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then_with(|| a.start_s.total_cmp(&b.start_s))
            .then_with(|| a.end_s.total_cmp(&b.end_s))
            .then_with(|| a.action.cmp(&b.action))
    });
    write_labels(&out.path("labels.jsonl"), &effective)?;
    println!("wrote {}", out.path("labels.jsonl").display());

    let by_video = group_records(effective);
    if by_video.is_empty() {
        bail!("no positively weighted labels remain after curation");
    }
    let mut corpus = Vec::with_capacity(by_video.len());
    for (video_id, recs) in &by_video {
        let raw = read_video(&args.imu, video_id)?;
        corpus.push(
            build_sequence(video_id, cfg.data.sample_rate, &raw, recs)
                .with_context(|| format!("assembling video {video_id}"))?,
        );
    }
    let prepared = prepare_corpus(&corpus, &cfg.data, cfg.model.seq_len, cfg.seed)?;
    check_disjoint(&prepared.splits)?;
    let manifest = build_manifest(&prepared, cfg.seed, &hash);
    out.write_json("manifest.json", &manifest)?;
    println!(
        "prepared {} videos: {} train / {} val / {} test sequences",
        corpus.len(),
        prepared.train.len(),
        prepared.val.len(),
        prepared.test.len()
    );
    Ok(())
}

/// Run the annotation-curation pipeline and derive clipped span labels.
fn curate(
    ctx: &Context,
    imu: &std::path::Path,
    records: Vec<AnnotationRecord>,
) -> Result<(Vec<LabelRecord>, PropagationReport, CoverageReport)> {
    let dp = &ctx.config.datapipe;
    let mut tiered = records;
    apply_tiers(&mut tiered, dp.corrected_weight)?;
    let (verified, pool): (Vec<AnnotationRecord>, Vec<AnnotationRecord>) = tiered
        .into_iter()
        .partition(|r| r.is_verified() && r.weight > 0.0);
    let report = propagate_labels(&verified, &pool, dp.similarity_threshold, dp.propagated_discount)?;
    let propagated = apply_propagation(&pool, &report.labeled);

    let video_ids: BTreeSet<String> = verified
        .iter()
        .chain(pool.iter())
        .map(|r| r.video_id.clone())
        .collect();
    let durations = durations_from_raw(imu, video_ids, ctx.config.data.sample_rate)?;
    let coverage =
        coverage_and_conflicts(&verified, &propagated, &durations, dp.annotation_span_s)?;

    let mut expanded = verified;
    expanded.extend(propagated);
    let mut spans = annotations_to_spans(&expanded, dp.annotation_span_s);
    for span in &mut spans {
        if let Some(&duration) = durations.get(&span.video_id) {
            span.end_s = span.end_s.min(duration);
        }
    }
    spans.retain(|s| s.end_s > s.start_s);
    Ok((spans, report, coverage))
}

/// Write the coverage report plus its two plot-ready tables.
pub fn write_coverage(
    out: &OutDir,
    hash: &str,
    seed: u64,
    coverage: &CoverageReport,
) -> Result<()> {
    out.write_json("coverage.json", &Stamped::new(hash, seed, coverage))?;
    let mut conflicts = Csv::new("text,occurrences,label,records");
    for c in &coverage.conflicts {
        for (label, count) in &c.label_counts {
            conflicts.row(&[
                format!("\"{}\"", c.text.replace('"', "\"\"")),
                c.occurrences.to_string(),
                label.clone(),
                count.to_string(),
            ]);
        }
    }
    out.write_text("conflicts.csv", &conflicts.finish())?;
    let mut pairs = Csv::new("label_a,label_b,pairs");
    for (a, b, n) in &coverage.pair_histogram {
        pairs.row(&[a.clone(), b.clone(), n.to_string()]);
    }
    out.write_text("pairs.csv", &pairs.finish())?;
    Ok(())
}

/// Hard error when any video id lands in more than one split.
fn check_disjoint(splits: &SplitVideos) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in splits
        .train
        .iter()
        .chain(splits.val.iter())
        .chain(splits.test.iter())
    {
        if !seen.insert(id.as_str()) {
            bail!("video {id} appears in more than one split");
        }
    }
    Ok(())
}
