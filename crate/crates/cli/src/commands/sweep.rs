//! `harkit sweep` — train once per task-weight β and tabulate the
//! action/scenario trade-off with Pareto flags.

use crate::artifacts::{cell, Csv, OutDir, Stamped};
use crate::corpus::load_corpus;
use crate::{Context, SourceArgs};
use anyhow::Result;
use harkit_core::dataset::prepare_corpus;
use harkit_core::train::{beta_sweep, SweepPoint};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct SweepTable {
    points: Vec<SweepPoint>,
}

pub fn run(ctx: &Context, source: &SourceArgs, out: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let corpus = load_corpus(&source.imu, &source.labels, cfg.data.sample_rate)?;
    let prepared = prepare_corpus(&corpus, &cfg.data, cfg.model.seq_len, cfg.seed)?;
    println!(
        "sweeping {} task weights over {} training sequences",
        cfg.sweep.betas.len(),
        prepared.train.len()
    );
    let points = beta_sweep(
        &cfg.model,
        &cfg.loss,
        &cfg.optim,
        &cfg.sweep,
        &prepared,
        Some(&cfg.data.augment),
        cfg.seed,
    )?;

    let mut csv = Csv::new("beta,action_macro_f1,scenario_macro_f1,best_epoch,pareto");
    for p in &points {
        println!(
            "beta {:.2}: action F1 {:.4}, scenario F1 {:.4}{}",
            p.beta,
            p.action_macro_f1,
            p.scenario_macro_f1,
            if p.pareto { " (pareto)" } else { "" }
        );
        csv.row(&[
            cell(p.beta),
            cell(p.action_macro_f1),
            cell(p.scenario_macro_f1),
            p.best_epoch.to_string(),
            p.pareto.to_string(),
        ]);
    }
    let hash = cfg.content_hash();
    out.write_json("sweep.json", &Stamped::new(&hash, cfg.seed, SweepTable { points }))?;
    out.write_text("sweep.csv", &csv.finish())?;
    Ok(())
}
