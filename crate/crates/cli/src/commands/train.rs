//! `harkit train` — fit a model and write `checkpoint.bin`, `history.json`,
//! and `history.csv`.
//!
//! The checkpoint holds the run configuration plus the raw/EMA parameter
//! pair from the best validation epoch, so `eval` and `analyze` can rebuild
//! the exact data pipeline without re-supplying the config.

use crate::artifacts::{cell, Csv, OutDir, Stamped};
use crate::corpus::load_corpus;
use crate::{Context, SourceArgs};
use anyhow::Result;
use harkit_core::dataset::prepare_corpus;
use harkit_core::model::Checkpoint;
use harkit_core::train::{train_logged, EpochRecord};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_action_f1: f64,
    stopped_early: bool,
    epochs_run: usize,
    history: Vec<EpochRecord>,
}

fn epoch_line(rec: &EpochRecord, budget: usize) {
    println!(
        "epoch {:>3}/{budget}  loss {:.4}  val action F1 {:.4}  scenario F1 {:.4}  lr {:.3e}",
        rec.epoch, rec.train_total, rec.val.action_macro_f1, rec.val.scenario_macro_f1, rec.lr
    );
}

pub fn run(ctx: &Context, source: &SourceArgs, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let corpus = load_corpus(&source.imu, &source.labels, cfg.data.sample_rate)?;
    let prepared = prepare_corpus(&corpus, &cfg.data, cfg.model.seq_len, cfg.seed)?;
    println!(
        "training on {} sequences ({} val, {} test held out)",
        prepared.train.len(),
        prepared.val.len(),
        prepared.test.len()
    );
    let result = train_logged(
        &cfg.model,
        &cfg.loss,
        &cfg.optim,
        &prepared,
        Some(&cfg.data.augment),
        cfg.seed,
        |rec| epoch_line(rec, cfg.optim.epochs),
    )?;

    let steps_to_best: u64 = result.history[..result.best_epoch]
        .iter()
        .map(|e| e.steps as u64)
        .sum();
    let summary = TrainSummary {
        best_epoch: result.best_epoch,
        best_action_f1: result.best_action_f1,
        stopped_early: result.stopped_early,
        epochs_run: result.history.len(),
        history: result.history,
    };
    let hash = cfg.content_hash();
    out.write_json("history.json", &Stamped::new(&hash, cfg.seed, &summary))?;
    out.write_text("history.csv", &history_csv(&summary.history))?;

    let checkpoint = Checkpoint {
        config: cfg.clone(),
        params: result.params,
        ema: Some(result.ema),
        epoch: result.best_epoch as u64,
        step: steps_to_best,
    };
    let ckpt_path = out.path("checkpoint.bin");
    checkpoint.save(&ckpt_path)?;
    println!("wrote {}", ckpt_path.display());
    println!(
        "best epoch {} with validation action F1 {:.4}",
        summary.best_epoch, summary.best_action_f1
    );
    Ok(())
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut csv = Csv::new(
        "epoch,steps,lr,train_total,train_scenario,train_action,grad_norm,\
         val_action_macro_f1,val_action_accuracy,val_scenario_macro_f1,val_scenario_accuracy",
    );
    for rec in history {
        csv.row(&[
            rec.epoch.to_string(),
            rec.steps.to_string(),
            cell(rec.lr),
            cell(rec.train_total),
            cell(rec.train_scenario),
            cell(rec.train_action),
            cell(rec.grad_norm),
            cell(rec.val.action_macro_f1),
            cell(rec.val.action_accuracy),
            cell(rec.val.scenario_macro_f1),
            cell(rec.val.scenario_accuracy),
        ]);
    }
    csv.finish()
}
