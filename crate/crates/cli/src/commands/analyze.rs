//! `harkit analyze` — distribution-level reports over a corpus.
//!
//! Model-free outputs (always written):
//!
//! * `separability.{json,csv}` — pairwise Bhattacharyya distances and MMD
//!   permutation tests between action classes in raw channel space.
//! * `transitions.{json,csv}` — action transition matrices, overall and per
//!   scenario (scenarios without observed transitions are omitted).
//! * `knn.{json,csv}` — grouped-cross-validation KNN ceiling at the three
//!   label granularities.
//!
//! With `--checkpoint`, `embeddings.csv` adds the model's per-window and
//! per-sequence embeddings for the test split (the checkpoint's own config
//! rebuilds the pipeline, as in `eval`).
//!
//! Analysis windows use the dedicated `analyze.window_stride` (default
//! non-overlapping) rather than the training stride, so statistical tests
//! don't see near-duplicate windows.

use crate::artifacts::{cell, Csv, OutDir, Stamped};
use crate::corpus::load_corpus;
use crate::{Context, SourceArgs};
use anyhow::{Context as _, Result};
use harkit_core::analysis::{
    extract_features, knn_ceiling, separability_matrix, transition_matrix, KnnCeiling,
    SeparabilityReport, TransitionMatrix, N_FEATURES,
};
use harkit_core::dataset::prepare_corpus;
use harkit_core::model::Checkpoint;
use harkit_core::signal::{segment_windows, Window};
use harkit_core::{ActionClass, CoreError, Scenario};
use ndarray::Array2;
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

#[derive(Serialize)]
struct TransitionSet {
    matrices: Vec<TransitionMatrix>,
}

pub fn run(
    ctx: &Context,
    source: &SourceArgs,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = &ctx.config;
    let out = OutDir::create(out)?;
    let hash = cfg.content_hash();
    let corpus = load_corpus(&source.imu, &source.labels, cfg.data.sample_rate)?;
    let per_video: Vec<Vec<Window>> = corpus
        .iter()
        .map(|seq| {
            segment_windows(
                seq,
                cfg.data.window_len,
                cfg.analyze.window_stride,
                cfg.data.min_overlap,
            )
        })
        .collect();

    let flat: Vec<Window> = per_video.iter().flatten().cloned().collect();
    println!(
        "analyzing {} windows from {} videos",
        flat.len(),
        corpus.len()
    );
    let sep = separability_matrix(&flat, &cfg.analyze, cfg.seed)?;
    out.write_text("separability.csv", &separability_csv(&sep))?;
    out.write_json("separability.json", &Stamped::new(&hash, cfg.seed, sep))?;

    let mut matrices = vec![transition_matrix(&per_video, None)?];
    for scenario in Scenario::ALL {
        match transition_matrix(&per_video, Some(scenario)) {
            Ok(m) => matrices.push(m),
            // A scenario absent from this corpus has no transitions to
            // estimate; anything else is a real failure.
            Err(CoreError::InvalidData(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    out.write_text("transitions.csv", &transitions_csv(&matrices))?;
    out.write_json(
        "transitions.json",
        &Stamped::new(&hash, cfg.seed, TransitionSet { matrices }),
    )?;

    let ceiling = knn(ctx, &corpus, &per_video)?;
    out.write_text("knn.csv", &knn_csv(&ceiling))?;
    out.write_json("knn.json", &Stamped::new(&hash, cfg.seed, ceiling))?;

    if let Some(ckpt_path) = checkpoint {
        export_embeddings(&out, ckpt_path, &corpus)?;
    }
    Ok(())
}

fn separability_csv(sep: &SeparabilityReport) -> String {
    let mut csv = Csv::new(
        "class_a,class_b,n_a,n_b,bhattacharyya,mmd2,p_raw,p_corrected,significant",
    );
    let n = sep.classes.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if sep.skipped[i] || sep.skipped[j] {
                continue;
            }
            csv.row(&[
                sep.classes[i].clone(),
                sep.classes[j].clone(),
                sep.n_vectors[i].to_string(),
                sep.n_vectors[j].to_string(),
                cell(sep.bhattacharyya[i][j]),
                cell(sep.mmd2[i][j]),
                cell(sep.p_raw[i][j]),
                cell(sep.p_corrected[i][j]),
                sep.significant[i][j].to_string(),
            ]);
        }
    }
    csv.finish()
}

fn transitions_csv(matrices: &[TransitionMatrix]) -> String {
    let mut csv = Csv::new("scope,from,to,probability,count");
    for m in matrices {
        for (i, from) in ActionClass::ALL.iter().enumerate() {
            for (j, to) in ActionClass::ALL.iter().enumerate() {
                csv.row(&[
                    m.scope.clone(),
                    from.name().to_string(),
                    to.name().to_string(),
                    cell(m.probs[i][j]),
                    m.counts[i][j].to_string(),
                ]);
            }
        }
    }
    csv.finish()
}

/// Classical per-window ceiling: hand features + grouped KNN.
fn knn(
    ctx: &Context,
    corpus: &[harkit_core::signal::ChannelizedSequence],
    per_video: &[Vec<Window>],
) -> Result<KnnCeiling> {
    let cfg = &ctx.config;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (seq, windows) in corpus.iter().zip(per_video) {
        for w in windows {
            if let Some(action) = w.action {
                if w.weight > 0.0 {
                    rows.extend(extract_features(w, cfg.data.sample_rate));
                    labels.push(action);
                    groups.push(seq.video_id.clone());
                }
            }
        }
    }
    let features = Array2::from_shape_vec((labels.len(), N_FEATURES), rows)
        .expect("feature rows are fixed-width");
    Ok(knn_ceiling(
        features.view(),
        &labels,
        &groups,
        cfg.analyze.knn_k,
        cfg.analyze.knn_folds,
        cfg.seed,
    )?)
}

fn knn_csv(ceiling: &KnnCeiling) -> String {
    let mut csv = Csv::new("granularity,macro_f1");
    csv.row(&["five_class".to_string(), cell(ceiling.macro_f1_5)]);
    csv.row(&["merged_four".to_string(), cell(ceiling.macro_f1_4)]);
    csv.row(&["merged_three".to_string(), cell(ceiling.macro_f1_3)]);
    csv.finish()
}

/// Model-dependent export: embeddings for the checkpoint-config test split.
fn export_embeddings(
    out: &OutDir,
    ckpt_path: &Path,
    corpus: &[harkit_core::signal::ChannelizedSequence],
) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let cfg = &ckpt.config;
    let prepared = prepare_corpus(corpus, &cfg.data, cfg.model.seq_len, cfg.seed)?;
    let path = out.path("embeddings.csv");
    let mut writer = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    harkit_core::analysis::export_embeddings(
        ckpt.eval_params(),
        &cfg.model,
        &prepared,
        &prepared.test,
        &mut writer,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
