//! `harkit curate <stage>` — the annotation-curation stages as standalone
//! record-file transforms, so each can be inspected or re-run in isolation.
//!
//! Record-wise stages (`normalize`, `tier`) keep input order, one output
//! line per input line; set-producing stages (`dedup`, `quota`,
//! `propagate`) emit canonically sorted results.

use crate::artifacts::{Csv, OutDir, Stamped};
use crate::commands::prepare::write_coverage;
use crate::corpus::durations_from_raw;
use crate::{Context, CurateCommand};
use anyhow::{bail, Context as _, Result};
use harkit_core::datapipe::{
    apply_propagation, apply_tiers, coverage_and_conflicts, dedup_narrations,
    normalize_narration, propagate_labels, read_annotations, sqrt_quota, write_annotations,
    AnnotationRecord,
};
use harkit_core::ActionClass;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

pub fn run(ctx: &Context, stage: &CurateCommand) -> Result<()> {
    match stage {
        CurateCommand::Normalize { annotations, out } => normalize(ctx, annotations, out),
        CurateCommand::Dedup { annotations, out } => dedup(ctx, annotations, out),
        CurateCommand::Quota {
            annotations,
            budget,
            alpha,
            out,
        } => quota(ctx, annotations, *budget, *alpha, out),
        CurateCommand::Tier { annotations, out } => tier(ctx, annotations, out),
        CurateCommand::Propagate { annotations, out } => propagate(ctx, annotations, out),
        CurateCommand::Coverage {
            annotations,
            durations,
            imu,
            out,
        } => coverage(ctx, annotations, durations.as_deref(), imu.as_deref(), out),
    }
}

fn read(path: &Path) -> Result<Vec<AnnotationRecord>> {
    Ok(read_annotations(path)
        .with_context(|| format!("reading annotations {}", path.display()))?)
}

/// Canonical record order shared by the set-producing stages.
fn sort_canonical(records: &mut [AnnotationRecord]) {
    records.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then_with(|| a.timestamp_s.total_cmp(&b.timestamp_s))
            .then_with(|| a.narration.cmp(&b.narration))
    });
}

fn write_records(out: &OutDir, name: &str, records: &[AnnotationRecord]) -> Result<()> {
    write_annotations(&out.path(name), records)?;
    println!("wrote {}", out.path(name).display());
    Ok(())
}

fn normalize(_ctx: &Context, annotations: &Path, out: &Path) -> Result<()> {
    let out = OutDir::create(out)?;
    let mut records = read(annotations)?;
    for rec in &mut records {
        rec.narration = normalize_narration(&rec.narration);
    }
    write_records(&out, "normalized.jsonl", &records)
}

#[derive(Serialize)]
struct DedupSummary {
    input_records: usize,
    groups: Vec<harkit_core::datapipe::NarrationGroup>,
}

fn dedup(ctx: &Context, annotations: &Path, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let records = read(annotations)?;
    let groups = dedup_narrations(&records);
    let mut csv = Csv::new("text,label,members");
    for g in &groups {
        csv.row(&[
            format!("\"{}\"", g.text.replace('"', "\"\"")),
            g.label.name().to_string(),
            g.members.len().to_string(),
        ]);
    }
    out.write_text("groups.csv", &csv.finish())?;
    out.write_json(
        "groups.json",
        &Stamped::new(
            &cfg.content_hash(),
            cfg.seed,
            DedupSummary {
                input_records: records.len(),
                groups,
            },
        ),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct QuotaSummary {
    alpha: f64,
    budget: u64,
    /// Class name → available records.
    counts: BTreeMap<String, u64>,
    /// Class name → records kept.
    quotas: BTreeMap<String, u64>,
    selected: usize,
}

fn quota(ctx: &Context, annotations: &Path, budget: u64, alpha: f64, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let mut records = read(annotations)?;
    sort_canonical(&mut records);
    let mut counts = [0u64; ActionClass::COUNT];
    for rec in &records {
        counts[rec.llm_label.index()] += 1;
    }
    let quotas = sqrt_quota(&counts, alpha, budget)?;
    let mut taken = [0u64; ActionClass::COUNT];
    let selected: Vec<AnnotationRecord> = records
        .iter()
        .filter(|rec| {
            let c = rec.llm_label.index();
            if taken[c] < quotas[c] {
                taken[c] += 1;
                true
            } else {
                false
            }
        })
        .cloned()
        .collect();
    write_records(&out, "selected.jsonl", &selected)?;
    let name = |i: usize| ActionClass::from_index(i).unwrap().name().to_string();
    out.write_json(
        "quota.json",
        &Stamped::new(
            &cfg.content_hash(),
            cfg.seed,
            QuotaSummary {
                alpha,
                budget,
                counts: (0..ActionClass::COUNT).map(|i| (name(i), counts[i])).collect(),
                quotas: (0..ActionClass::COUNT).map(|i| (name(i), quotas[i])).collect(),
                selected: selected.len(),
            },
        ),
    )?;
    Ok(())
}

fn tier(ctx: &Context, annotations: &Path, out: &Path) -> Result<()> {
    let out = OutDir::create(out)?;
    let mut records = read(annotations)?;
    apply_tiers(&mut records, ctx.config.datapipe.corrected_weight)?;
    write_records(&out, "tiered.jsonl", &records)
}

fn propagate(ctx: &Context, annotations: &Path, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let dp = &cfg.datapipe;
    let out = OutDir::create(out)?;
    let (verified, pool): (Vec<AnnotationRecord>, Vec<AnnotationRecord>) = read(annotations)?
        .into_iter()
        .partition(|r| r.is_verified() && r.weight > 0.0);
    let report =
        propagate_labels(&verified, &pool, dp.similarity_threshold, dp.propagated_discount)?;
    let mut expanded = verified;
    expanded.extend(apply_propagation(&pool, &report.labeled));
    sort_canonical(&mut expanded);
    println!(
        "propagated {} labels ({} exact, {} by similarity); expansion {:.2}x, {} conflicts",
        report.labeled.len(),
        report.exact_count,
        report.similarity_count,
        report.expansion_factor,
        report.conflicts.len()
    );
    write_records(&out, "expanded.jsonl", &expanded)?;
    out.write_json(
        "propagation.json",
        &Stamped::new(&cfg.content_hash(), cfg.seed, report),
    )?;
    Ok(())
}

fn coverage(
    ctx: &Context,
    annotations: &Path,
    durations: Option<&Path>,
    imu: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let records = read(annotations)?;
    let durations: BTreeMap<String, f64> = match (durations, imu) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading durations {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing durations {}", path.display()))?
        }
        (None, Some(imu)) => {
            let ids: BTreeSet<String> = records.iter().map(|r| r.video_id.clone()).collect();
            durations_from_raw(imu, ids, cfg.data.sample_rate)?
        }
        _ => bail!("exactly one of --durations and --imu is required"),
    };
    let (verified, rest): (Vec<AnnotationRecord>, Vec<AnnotationRecord>) = records
        .into_iter()
        .partition(|r| r.is_verified() && r.weight > 0.0);
    let propagated: Vec<AnnotationRecord> =
        rest.into_iter().filter(|r| r.weight > 0.0).collect();
    let report = coverage_and_conflicts(
        &verified,
        &propagated,
        &durations,
        cfg.datapipe.annotation_span_s,
    )?;
    println!(
        "coverage: gold {:.4}, with propagation {:.4} ({} conflicting texts)",
        report.gold_coverage,
        report.total_coverage,
        report.conflicts.len()
    );
    write_coverage(&out, &cfg.content_hash(), cfg.seed, &report)?;
    Ok(())
}
