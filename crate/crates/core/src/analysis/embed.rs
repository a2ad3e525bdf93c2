//! CSV export of learned sequence embeddings.
//!
//! Runs the model in eval mode over prepared sequences and writes one row
//! per window (its embedding `e` and contextualized token `h`) plus one
//! summary row per sequence holding the CLS embedding. Floats are written
//! with the shortest round-trip formatting, so re-exporting the same
//! parameters over the same data is byte-identical.

use crate::config::ModelConfig;
use crate::dataset::PreparedCorpus;
use crate::error::CoreError;
use crate::ad::Tape;
use crate::model::{forward, DropoutMode, ParamNodes, ParamSet};
use crate::signal::SequenceSample;
use std::io::Write;

/// Sequences per forward pass; bounds tape memory during export.
const EXPORT_CHUNK: usize = 8;

fn column_header(cfg: &ModelConfig) -> String {
    let mut h = String::from("video_id,sequence_index,window_index,row_kind,action,action_weight,scenario");
    for k in 0..cfg.embed_dim {
        h.push_str(&format!(",e_{k}"));
    }
    for k in 0..cfg.embed_dim {
        h.push_str(&format!(",h_{k}"));
    }
    h.push('\n');
    h
}

/// Export per-window and per-sequence embeddings for `samples` as CSV.
///
/// `samples` must come from the same corpus `prepared` was built on (its
/// normalization statistics are applied before the forward pass).
pub fn export_embeddings(
    params: &ParamSet,
    cfg: &ModelConfig,
    prepared: &PreparedCorpus,
    samples: &[SequenceSample],
    out: &mut dyn Write,
) -> Result<(), CoreError> {
    let fail = |e: std::io::Error| CoreError::io("embedding export", e);
    out.write_all(column_header(cfg).as_bytes()).map_err(fail)?;
    let indices: Vec<usize> = (0..samples.len()).collect();
    let d = cfg.embed_dim;
    let mut line = String::new();
    for chunk in indices.chunks(EXPORT_CHUNK) {
        let batch = prepared.batch(samples, chunk)?;
        let bsz = chunk.len();
        let mut tape = Tape::new();
        let pn = ParamNodes::bind(&mut tape, params, false);
        let xid = tape.constant(batch.windows.clone());
        let fwd = forward(&mut tape, &pn, cfg, xid, bsz, &mut DropoutMode::Eval);
        let e = tape.value(fwd.window_embeddings);
        let h = tape.value(fwd.context_tokens);
        let cls = tape.value(fwd.cls_embedding);
        for (b, &seq_idx) in chunk.iter().enumerate() {
            let sample = &samples[seq_idx];
            let scenario = sample.scenario.name();
            for (w, window) in sample.windows.iter().enumerate() {
                line.clear();
                let action = window.action.map_or("", |a| a.name());
                line.push_str(&format!(
                    "{},{seq_idx},{w},window,{action},{},{scenario}",
                    sample.video_id, window.weight
                ));
                for k in 0..d {
                    line.push_str(&format!(",{}", e[[b, w, k]]));
                }
                for k in 0..d {
                    line.push_str(&format!(",{}", h[[b, w, k]]));
                }
                line.push('\n');
                out.write_all(line.as_bytes()).map_err(fail)?;
            }
            line.clear();
            line.push_str(&format!("{},{seq_idx},,cls,,,{scenario}", sample.video_id));
            for _ in 0..d {
                line.push(',');
            }
            for k in 0..d {
                line.push_str(&format!(",{}", cls[[b, k]]));
            }
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(fail)?;
        }
    }
    out.flush().map_err(fail)
}
