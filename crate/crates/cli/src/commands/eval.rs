//! `harkit eval` — score a trained checkpoint on one corpus split.
//!
//! The checkpoint's embedded configuration (not `--config`) governs the
//! model architecture, the windowing, and the seed that assigns videos to
//! splits, so evaluation always sees the same split boundaries training
//! did. The EMA shadow weights are used when present.

use crate::artifacts::{OutDir, Stamped};
use crate::corpus::load_corpus;
use crate::{Context, SourceArgs, Split};
use anyhow::Result;
use harkit_core::dataset::prepare_corpus;
use harkit_core::model::Checkpoint;
use harkit_core::train::{evaluate, Metrics};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct EvalReport {
    split: &'static str,
    /// Best-validation epoch the checkpoint captured.
    epoch: u64,
    step: u64,
    metrics: Metrics,
}

pub fn run(
    _ctx: &Context,
    checkpoint: &Path,
    source: &SourceArgs,
    split: Split,
    out: &Path,
) -> Result<()> {
    let out = OutDir::create(out)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.config;
    let corpus = load_corpus(&source.imu, &source.labels, cfg.data.sample_rate)?;
    let prepared = prepare_corpus(&corpus, &cfg.data, cfg.model.seq_len, cfg.seed)?;
    let samples = match split {
        Split::Train => &prepared.train,
        Split::Val => &prepared.val,
        Split::Test => &prepared.test,
    };
    let metrics = evaluate(
        ckpt.eval_params(),
        &cfg.model,
        &prepared,
        samples,
        cfg.optim.micro_batch.max(8),
    )?;
    println!(
        "{} split: action macro F1 {:.4}, scenario macro F1 {:.4} over {} windows",
        split.name(),
        metrics.action_macro_f1,
        metrics.scenario_macro_f1,
        metrics.n_windows
    );
    let report = EvalReport {
        split: split.name(),
        epoch: ckpt.epoch,
        step: ckpt.step,
        metrics,
    };
    out.write_json(
        "metrics.json",
        &Stamped::new(&cfg.content_hash(), cfg.seed, report),
    )?;
    Ok(())
}
