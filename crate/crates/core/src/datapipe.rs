//! Annotation curation pipeline.
//!
//! Raw narration annotations arrive as timestamped records carrying a
//! machine-proposed label and a human verification verdict. The pipeline
//! turns them into weighted training labels in pure, order-independent
//! stages:
//!
//! 1. [`normalize_narration`] — canonical narration text,
//! 2. [`dedup_narrations`] — group identical (text, label) pairs,
//! 3. [`assign_tier`] / [`apply_tiers`] — verdict → confidence weight,
//! 4. [`sqrt_quota`] — class-balanced subsampling budgets,
//! 5. [`propagate_labels`] — spread verified labels to near-duplicates,
//! 6. [`coverage_and_conflicts`] — labeled-time and disagreement report.
//!
//! Records are exchanged as line-oriented JSON so every stage can run
//! independently and diffs stay line-local.

use crate::error::CoreError;
use crate::signal::LabelRecord;
use crate::taxonomy::{ActionClass, Scenario};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Human verification outcome for one annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The proposed label was confirmed as-is.
    Gold,
    /// A human replaced the proposed label (see `corrected_label`).
    Corrected,
    /// The annotator could not decide; the record carries no weight.
    Skipped,
    /// The narration does not describe a labelable action.
    Deleted,
}

/// One timestamped narration annotation after verification.
///
/// `tier` and `weight` start at 0 and are filled in by [`apply_tiers`];
/// every other field comes from the annotation source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub timestamp_s: f64,
    pub narration: String,
    pub scenario: Scenario,
    /// Machine-proposed action label.
    pub llm_label: ActionClass,
    pub verdict: Verdict,
    /// Replacement label; present iff the verdict is `Corrected`.
    #[serde(default)]
    pub corrected_label: Option<ActionClass>,
    /// The proposer offered a plausible second label.
    #[serde(default)]
    pub has_secondary_choice: bool,
    /// The narration verb was flagged as ambiguous.
    #[serde(default)]
    pub ambiguous_verb: bool,
    /// Confidence tier 1–4 (0 until assigned).
    #[serde(default)]
    pub tier: u8,
    /// Training weight implied by the tier (0 until assigned).
    #[serde(default)]
    pub weight: f64,
}

impl AnnotationRecord {
    /// The label training should use: the correction when present, the
    /// proposed label otherwise.
    pub fn effective_label(&self) -> ActionClass {
        match self.verdict {
            Verdict::Corrected => self.corrected_label.unwrap_or(self.llm_label),
            _ => self.llm_label,
        }
    }

    /// True once the verdict grants the record any training weight.
    pub fn is_verified(&self) -> bool {
        matches!(self.verdict, Verdict::Gold | Verdict::Corrected)
    }
}

/// One pass of the normalization rewrite; [`normalize_narration`] iterates
/// it to a fixed point.
fn normalize_pass(s: &str) -> String {
    let stripped = s.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    stripped
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonicalize narration text: lowercase, strip trailing punctuation,
/// drop standalone articles (a/an/the), collapse whitespace.
///
/// The rewrite is applied until it stabilizes, so the function is
/// idempotent even when removing an article exposes new trailing
/// punctuation ("picks. the" → "picks." → "picks").
pub fn normalize_narration(text: &str) -> String {
    let mut cur = text.to_lowercase();
    loop {
        let next = normalize_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// A set of records sharing normalized narration text *and* proposed label.
///
/// Identical text under different labels stays in separate groups: the
/// disagreement is signal for the conflict report, not noise to merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationGroup {
    pub text: String,
    pub label: ActionClass,
    /// Indices into the input slice, ordered by (video, timestamp) so the
    /// first member is a stable canonical representative.
    pub members: Vec<usize>,
}

/// Group records by (normalized narration, proposed label).
///
/// Groups are emitted in (text, label) order and member lists are sorted by
/// (video, timestamp, narration), so the output is independent of input
/// order up to genuinely identical records.
pub fn dedup_narrations(records: &[AnnotationRecord]) -> Vec<NarrationGroup> {
    let mut groups: BTreeMap<(String, ActionClass), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((normalize_narration(&r.narration), r.llm_label))
            .or_default()
            .push(i);
    }
    groups
        .into_iter()
        .map(|((text, label), mut members)| {
            members.sort_by(|&a, &b| {
                let ka = (&records[a].video_id, records[a].timestamp_s, &records[a].narration);
                let kb = (&records[b].video_id, records[b].timestamp_s, &records[b].narration);
                ka.0.cmp(kb.0)
                    .then(ka.1.total_cmp(&kb.1))
                    .then(ka.2.cmp(kb.2))
            });
            NarrationGroup {
                text,
                label,
                members,
            }
        })
        .collect()
}

/// Class-balanced sampling quotas: `quota_c ∝ count_c^alpha`, rounded by
/// largest remainder so the quotas sum to `budget` exactly, then capped at
/// the available counts with the excess redistributed.
///
/// `alpha` = 1 gives proportional sampling, 0 equal sampling (over classes
/// that have any records), and 0.5 the square-root compromise that lifts
/// rare classes without flooding the batch with them.
pub fn sqrt_quota(
    counts: &[u64; ActionClass::COUNT],
    alpha: f64,
    budget: u64,
) -> Result<[u64; ActionClass::COUNT], CoreError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "quota exponent {alpha} must be finite and non-negative"
        )));
    }
    if budget == 0 {
        return Err(CoreError::InvalidConfig("quota budget must be positive".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CoreError::InvalidData("all class counts are zero".into()));
    }
    if budget > total {
        return Err(CoreError::InvalidConfig(format!(
            "budget {budget} exceeds the {total} available records"
        )));
    }
    let mut quotas = [0u64; ActionClass::COUNT];
    // Classes still below their count cap and eligible for allocation.
    let mut open: Vec<usize> = (0..ActionClass::COUNT).filter(|&c| counts[c] > 0).collect();
    let mut remaining = budget;
    while remaining > 0 {
        let weights: Vec<f64> = open.iter().map(|&c| (counts[c] as f64).powf(alpha)).collect();
        let wsum: f64 = weights.iter().sum();
        // Largest-remainder apportionment of `remaining` over open classes.
        let shares: Vec<f64> = weights.iter().map(|w| remaining as f64 * w / wsum).collect();
        let mut alloc: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
        let mut leftover = remaining - alloc.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.total_cmp(&ra).then(open[a].cmp(&open[b]))
        });
        for &i in &order {
            if leftover == 0 {
                break;
            }
            alloc[i] += 1;
            leftover -= 1;
        }
        // Apply up to each class's capacity; anything over goes back into
        // the pot for the next round over the still-open classes.
        remaining = 0;
        let mut next_open = Vec::new();
        for (i, &c) in open.iter().enumerate() {
            let capacity = counts[c] - quotas[c];
            let take = alloc[i].min(capacity);
            quotas[c] += take;
            remaining += alloc[i] - take;
            if quotas[c] < counts[c] {
                next_open.push(c);
            }
        }
        open = next_open;
    }
    Ok(quotas)
}

/// Map a verified record to its confidence tier and training weight.
///
/// Gold with no secondary choice and an unambiguous verb is tier 1 (weight
/// 1.0); gold with either flag set is tier 2 (0.8); corrected labels are
/// tier 3 with a configurable weight in [0.5, 0.7]; skipped and deleted
/// records are tier 4 with weight 0.
pub fn assign_tier(rec: &AnnotationRecord, corrected_weight: f64) -> Result<(u8, f64), CoreError> {
    if !(0.5..=0.7).contains(&corrected_weight) {
        return Err(CoreError::InvalidConfig(format!(
            "corrected weight {corrected_weight} outside [0.5, 0.7]"
        )));
    }
    Ok(match rec.verdict {
        Verdict::Gold => {
            if rec.has_secondary_choice || rec.ambiguous_verb {
                (2, 0.8)
            } else {
                (1, 1.0)
            }
        }
        Verdict::Corrected => {
            if rec.corrected_label.is_none() {
                return Err(CoreError::InvalidData(format!(
                    "corrected record \"{}\" has no corrected label",
                    rec.narration
                )));
            }
            (3, corrected_weight)
        }
        Verdict::Skipped | Verdict::Deleted => (4, 0.0),
    })
}

/// Fill `tier` and `weight` on every record in place.
pub fn apply_tiers(
    records: &mut [AnnotationRecord],
    corrected_weight: f64,
) -> Result<(), CoreError> {
    for rec in records.iter_mut() {
        let (tier, weight) = assign_tier(rec, corrected_weight)?;
        rec.tier = tier;
        rec.weight = weight;
    }
    Ok(())
}

fn token_set(normalized: &str) -> BTreeSet<&str> {
    normalized.split_whitespace().collect()
}

/// Jaccard similarity of the two narrations' token sets.
fn token_jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// How a propagated label found its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationChannel {
    /// Identical normalized narration text (threshold-independent).
    ExactText,
    /// Token-set similarity above the configured threshold.
    TokenSimilarity,
}

/// One pool record that received a verified label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatedLabel {
    /// Index into the pool slice.
    pub pool_index: usize,
    pub label: ActionClass,
    /// Source weight × the propagation discount.
    pub weight: f64,
    /// Index of the chosen source in the verified slice.
    pub source_index: usize,
    pub channel: PropagationChannel,
    /// Token-set similarity to the chosen source (1 for exact text).
    pub similarity: f64,
}

/// A pool record whose candidate sources disagree; it stays unlabeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConflict {
    pub pool_index: usize,
    /// Distinct labels proposed by matching sources, in taxonomy order.
    pub labels: Vec<ActionClass>,
}

/// Outcome of [`propagate_labels`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub labeled: Vec<PropagatedLabel>,
    pub conflicts: Vec<PropagationConflict>,
    /// (verified + propagated) / verified.
    pub expansion_factor: f64,
    /// Propagations via identical normalized text.
    pub exact_count: usize,
    /// Propagations that needed the similarity threshold.
    pub similarity_count: usize,
    /// Pool records skipped because they already carry a verification.
    pub already_verified: usize,
}

/// Spread verified labels onto unverified near-duplicate narrations.
///
/// A pool record matches a source when the normalized texts are identical
/// (always propagates) or their token-set Jaccard similarity exceeds
/// `threshold`. If all matching sources agree, the pool record gets that
/// label at `source weight × discount` (the strongest source wins ties);
/// if they disagree it is routed to the conflict list instead. Pool records
/// that are themselves verified are never relabeled.
pub fn propagate_labels(
    verified: &[AnnotationRecord],
    pool: &[AnnotationRecord],
    threshold: f64,
    discount: f64,
) -> Result<PropagationReport, CoreError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "similarity threshold {threshold} must be positive"
        )));
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "propagation discount {discount} outside (0, 1]"
        )));
    }
    struct Source {
        index: usize,
        text: String,
        label: ActionClass,
        weight: f64,
    }
    let sources: Vec<Source> = verified
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_verified() && r.weight > 0.0)
        .map(|(i, r)| Source {
            index: i,
            text: normalize_narration(&r.narration),
            label: r.effective_label(),
            weight: r.weight,
        })
        .collect();
    if sources.is_empty() {
        return Err(CoreError::InvalidData(
            "no verified records with positive weight to propagate from".into(),
        ));
    }
    let source_tokens: Vec<BTreeSet<&str>> = sources.iter().map(|s| token_set(&s.text)).collect();

    let mut labeled = Vec::new();
    let mut conflicts = Vec::new();
    let mut exact_count = 0;
    let mut similarity_count = 0;
    let mut already_verified = 0;
    for (pi, rec) in pool.iter().enumerate() {
        if rec.is_verified() {
            already_verified += 1;
            continue;
        }
        let text = normalize_narration(&rec.narration);
        let tokens = token_set(&text);
        // Best (exactness, weight, similarity, −index) match per label.
        let mut best: Option<(PropagationChannel, f64, f64, usize, ActionClass)> = None;
        let mut labels: BTreeSet<ActionClass> = BTreeSet::new();
        for (si, s) in sources.iter().enumerate() {
            let exact = s.text == text;
            let sim = if exact {
                1.0
            } else {
                token_jaccard(&tokens, &source_tokens[si])
            };
            if !(exact || sim > threshold) {
                continue;
            }
            labels.insert(s.label);
            let channel = if exact {
                PropagationChannel::ExactText
            } else {
                PropagationChannel::TokenSimilarity
            };
            let better = match &best {
                None => true,
                Some((bc, bw, bs, bi, _)) => {
                    let rank = |c: &PropagationChannel| matches!(c, PropagationChannel::ExactText);
                    (rank(&channel), s.weight, sim, std::cmp::Reverse(s.index))
                        > (rank(bc), *bw, *bs, std::cmp::Reverse(*bi))
                }
            };
            if better {
                best = Some((channel, s.weight, sim, s.index, s.label));
            }
        }
        if labels.len() > 1 {
            conflicts.push(PropagationConflict {
                pool_index: pi,
                labels: labels.into_iter().collect(),
            });
            continue;
        }
        if let Some((channel, weight, similarity, source_index, label)) = best {
            match channel {
                PropagationChannel::ExactText => exact_count += 1,
                PropagationChannel::TokenSimilarity => similarity_count += 1,
            }
            labeled.push(PropagatedLabel {
                pool_index: pi,
                label,
                weight: weight * discount,
                source_index,
                channel,
                similarity,
            });
        }
    }
    let expansion_factor = (sources.len() + labeled.len()) as f64 / sources.len() as f64;
    Ok(PropagationReport {
        labeled,
        conflicts,
        expansion_factor,
        exact_count,
        similarity_count,
        already_verified,
    })
}

/// Materialize propagation results as records: each labeled pool record
/// gets the propagated label and discounted weight, while its verdict and
/// tier keep recording the original review outcome — a positive weight on
/// an unverified record is what marks it as propagated.
pub fn apply_propagation(
    pool: &[AnnotationRecord],
    labeled: &[PropagatedLabel],
) -> Vec<AnnotationRecord> {
    labeled
        .iter()
        .map(|pl| {
            let mut rec = pool[pl.pool_index].clone();
            rec.llm_label = pl.label;
            rec.weight = pl.weight;
            rec
        })
        .collect()
}

/// One narration text that received at least two distinct verified labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConflict {
    /// Normalized narration text.
    pub text: String,
    /// Verified records carrying this text.
    pub occurrences: usize,
    /// Label name → record count, most frequent first (ties by name).
    pub label_counts: Vec<(String, usize)>,
}

/// Labeled-time coverage plus narration-level label disagreements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Union of verified label spans / total duration.
    pub gold_coverage: f64,
    /// Union of verified + propagated spans / total duration.
    pub total_coverage: f64,
    pub gold_seconds: f64,
    pub total_seconds: f64,
    pub duration_seconds: f64,
    /// Conflicting texts ranked by occurrence count (ties by text).
    pub conflicts: Vec<TextConflict>,
    /// Unordered label-pair histogram over all conflicting record pairs,
    /// ranked by count: (label, label, conflicting pairs).
    pub pair_histogram: Vec<(String, String, usize)>,
}

/// Merge `[start, end]` intervals and return the total covered length.
fn union_length(intervals: &mut Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for &(s, e) in intervals.iter() {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// The `[t − span/2, t + span/2]` interval a record labels, clipped to its
/// video's duration.
fn record_interval(
    rec: &AnnotationRecord,
    durations: &BTreeMap<String, f64>,
    span_s: f64,
) -> Result<(f64, f64), CoreError> {
    let duration = durations.get(&rec.video_id).copied().ok_or_else(|| {
        CoreError::InvalidData(format!("no duration for video {}", rec.video_id))
    })?;
    let half = span_s / 2.0;
    Ok((
        (rec.timestamp_s - half).max(0.0),
        (rec.timestamp_s + half).min(duration),
    ))
}

/// Measure labeled-time coverage and collect narration-label conflicts.
///
/// Each positive-weight record labels `span_s` seconds centered on its
/// timestamp; coverage is the per-video interval union divided by the
/// summed durations. Conflicts consider verified records only: a
/// normalized text with two or more distinct effective labels yields one
/// entry, and every cross-label record pair increments the global pair
/// histogram.
pub fn coverage_and_conflicts(
    verified: &[AnnotationRecord],
    propagated: &[AnnotationRecord],
    durations: &BTreeMap<String, f64>,
    span_s: f64,
) -> Result<CoverageReport, CoreError> {
    let duration_seconds: f64 = durations.values().sum();
    if !(duration_seconds > 0.0) {
        return Err(CoreError::InvalidData(
            "total video duration must be positive".into(),
        ));
    }
    if !(span_s > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "annotation span {span_s} must be positive"
        )));
    }
    let mut per_video_gold: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    let mut per_video_all: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in verified.iter().filter(|r| r.weight > 0.0) {
        let iv = record_interval(rec, durations, span_s)?;
        per_video_gold.entry(&rec.video_id).or_default().push(iv);
        per_video_all.entry(&rec.video_id).or_default().push(iv);
    }
    for rec in propagated.iter().filter(|r| r.weight > 0.0) {
        let iv = record_interval(rec, durations, span_s)?;
        per_video_all.entry(&rec.video_id).or_default().push(iv);
    }
    let gold_seconds: f64 = per_video_gold.values_mut().map(union_length).sum();
    let total_seconds: f64 = per_video_all.values_mut().map(union_length).sum();

    // Conflicts over verified records: normalized text → label counts.
    let mut by_text: BTreeMap<String, BTreeMap<ActionClass, usize>> = BTreeMap::new();
    for rec in verified.iter().filter(|r| r.is_verified() && r.weight > 0.0) {
        *by_text
            .entry(normalize_narration(&rec.narration))
            .or_default()
            .entry(rec.effective_label())
            .or_default() += 1;
    }
    let mut conflicts = Vec::new();
    let mut pairs: BTreeMap<(ActionClass, ActionClass), usize> = BTreeMap::new();
    for (text, label_map) in &by_text {
        if label_map.len() < 2 {
            continue;
        }
        let occurrences = label_map.values().sum();
        let mut label_counts: Vec<(String, usize)> = label_map
            .iter()
            .map(|(l, n)| (l.name().to_string(), *n))
            .collect();
        label_counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        conflicts.push(TextConflict {
            text: text.clone(),
            occurrences,
            label_counts,
        });
        let classes: Vec<(&ActionClass, &usize)> = label_map.iter().collect();
        for i in 0..classes.len() {
            for j in i + 1..classes.len() {
                *pairs.entry((*classes[i].0, *classes[j].0)).or_default() +=
                    classes[i].1 * classes[j].1;
            }
        }
    }
    conflicts.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.text.cmp(&b.text)));
    let mut pair_histogram: Vec<(String, String, usize)> = pairs
        .into_iter()
        .map(|((a, b), n)| (a.name().to_string(), b.name().to_string(), n))
        .collect();
    pair_histogram.sort_by(|a, b| b.2.cmp(&a.2).then((&a.0, &a.1).cmp(&(&b.0, &b.1))));

    Ok(CoverageReport {
        gold_coverage: gold_seconds / duration_seconds,
        total_coverage: total_seconds / duration_seconds,
        gold_seconds,
        total_seconds,
        duration_seconds,
        conflicts,
        pair_histogram,
    })
}

/// Turn weighted annotations into span labels for windowing: each
/// positive-weight record labels `span_s` seconds centered on its
/// timestamp with its effective label and tier weight.
pub fn annotations_to_spans(records: &[AnnotationRecord], span_s: f64) -> Vec<LabelRecord> {
    let half = span_s / 2.0;
    records
        .iter()
        .filter(|r| r.weight > 0.0)
        .map(|r| LabelRecord {
            video_id: r.video_id.clone(),
            scenario: r.scenario.name().to_string(),
            start_s: (r.timestamp_s - half).max(0.0),
            end_s: r.timestamp_s + half,
            action: r.effective_label().name().to_string(),
            weight: r.weight,
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> CoreError {
    CoreError::io(path.display().to_string(), source)
}

/// Write records as line-oriented JSON.
pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<(), CoreError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| CoreError::InvalidData(format!("annotation serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read line-oriented JSON records; blank lines are ignored.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CoreError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
