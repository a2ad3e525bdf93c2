//! Focal and multi-task losses, as both plain-scalar reference functions and
//! tape graphs, plus exact gradient computation over micro-batched tapes.
//!
//! Loss shape: targets are smoothed (`ỹ = (1−ε)·onehot + ε/C`), the focal
//! modulation `(1−p_c)^γ` applies per smoothed component, and the target
//! class's weight scales the whole sample. The action loss is normalized by
//! the sum of window confidence weights in the batch (not the window count);
//! the scenario loss by the sequence count. The combined objective is
//! `β·L_scenario + (1−β)·L_action`.

use crate::ad::{Tape, TensorId};
use crate::config::{LossConfig, ModelConfig};
use crate::error::CoreError;
use crate::model::{forward, DropoutMode, ForwardOutput, ParamNodes, ParamSet};
use crate::rng::stream;
use ndarray::{ArrayD, Axis, IxDyn};
use rayon::prelude::*;

/// One training batch, sequence-major: window `b·S + s` of `windows` belongs
/// to sequence `b` at position `s`.
#[derive(Clone)]
pub struct Batch {
    /// `[B·S, T, C]` normalized input windows.
    pub windows: ArrayD<f64>,
    /// Scenario class per sequence, length `B`.
    pub scenario: Vec<usize>,
    /// Action class per window, length `B·S` (ignored where weight = 0).
    pub action: Vec<usize>,
    /// Confidence weight per window in `[0,1]`, length `B·S`.
    pub action_weight: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.scenario.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenario.is_empty()
    }

    fn slice_seqs(&self, lo: usize, hi: usize, seq_len: usize) -> Batch {
        let w = self
            .windows
            .slice_axis(Axis(0), ndarray::Slice::from(lo * seq_len..hi * seq_len))
            .to_owned();
        Batch {
            windows: w,
            scenario: self.scenario[lo..hi].to_vec(),
            action: self.action[lo * seq_len..hi * seq_len].to_vec(),
            action_weight: self.action_weight[lo * seq_len..hi * seq_len].to_vec(),
        }
    }
}

/// Loss components for one batch. `action_empty` flags a batch whose windows
/// all carry zero weight (the action term is defined as 0 there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub scenario: f64,
    pub action: f64,
    pub action_empty: bool,
}

/// Reference focal loss for one sample (no tape): smoothed targets, focal
/// modulation per component, class weight of the true class, sample weight.
pub fn focal_loss(
    logits: &[f64],
    target: usize,
    class_weights: &[f64],
    gamma: f64,
    smoothing: f64,
    sample_weight: f64,
) -> f64 {
    let c = logits.len();
    debug_assert!(target < c && class_weights.len() == c);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    let mut acc = 0.0;
    for (k, &logit) in logits.iter().enumerate() {
        let lp = logit - lse;
        let p = lp.exp();
        let y = if k == target { 1.0 - smoothing + smoothing / c as f64 } else { smoothing / c as f64 };
        let modulation = if gamma == 0.0 { 1.0 } else { (1.0 - p).powf(gamma) };
        acc += y * modulation * (-lp);
    }
    sample_weight * class_weights[target] * acc
}

/// Smoothed one-hot target matrix `[rows, C]`.
fn smoothed_targets(targets: &[usize], c: usize, eps: f64) -> ArrayD<f64> {
    let mut m = ArrayD::from_elem(IxDyn(&[targets.len(), c]), eps / c as f64);
    {
        let s = m.as_slice_mut().unwrap();
        for (i, &t) in targets.iter().enumerate() {
            s[i * c + t] += 1.0 - eps;
        }
    }
    m
}

/// Build the focal-loss sum over rows of `logits` `[R, C]` on the tape:
/// `Σ_r w_r · Σ_c ỹ_rc · (1−p_rc)^γ · (−log p_rc)` where `w_r` already
/// includes the target-class weight and any sample weight.
fn focal_sum_graph(
    tape: &mut Tape,
    logits: TensorId,
    targets: &[usize],
    row_weights: &[f64],
    c: usize,
    gamma: f64,
    eps: f64,
) -> TensorId {
    let r = targets.len();
    let lp = tape.log_softmax(logits);
    let ystar = tape.constant(smoothed_targets(targets, c, eps));
    let weighted_y = if gamma == 0.0 {
        ystar
    } else {
        let p = tape.exp(lp);
        let neg_p = tape.scale(p, -1.0);
        let one_minus_p = tape.add_scalar(neg_p, 1.0);
        let modulation = tape.pow_const(one_minus_p, gamma);
        tape.mul(ystar, modulation)
    };
    let terms = tape.mul(weighted_y, lp);
    let per_row = tape.sum_axis_op(terms, 1); // [R]
    let neg = tape.scale(per_row, -1.0);
    let w = tape.constant(ArrayD::from_shape_vec(IxDyn(&[r]), row_weights.to_vec()).unwrap());
    let weighted = tape.mul(neg, w);
    tape.sum_all(weighted)
}

/// Build the combined loss for one (micro-)batch on the tape. The
/// denominators are passed in so a batch can be split across tapes and the
/// chunk losses still sum to the exact full-batch loss.
fn build_loss_graph(
    tape: &mut Tape,
    out: &ForwardOutput,
    batch: &Batch,
    cfg: &LossConfig,
    scen_denom: f64,
    action_denom: f64,
) -> (TensorId, TensorId, TensorId) {
    let b = batch.scenario.len();
    let n_scen = tape.shape(out.scenario_logits)[1];
    let n_act = tape.shape(out.action_logits)[2];
    let s = tape.shape(out.action_logits)[1];

    // Scenario: unit sample weights, class weight of the true scenario.
    let scen_weights: Vec<f64> = batch
        .scenario
        .iter()
        .map(|&t| cfg.scenario_class_weights[t])
        .collect();
    let scen_sum = focal_sum_graph(
        tape,
        out.scenario_logits,
        &batch.scenario,
        &scen_weights,
        n_scen,
        cfg.gamma,
        cfg.label_smoothing,
    );
    let scen_term = tape.scale(scen_sum, 1.0 / scen_denom);

    // Action: rows are windows; weight = confidence × class weight. Windows
    // with zero confidence contribute nothing but keep the row layout fixed.
    let flat_logits = tape.reshape(out.action_logits, &[b * s, n_act]);
    let act_weights: Vec<f64> = batch
        .action
        .iter()
        .zip(batch.action_weight.iter())
        .map(|(&t, &w)| w * cfg.action_class_weights[t])
        .collect();
    let act_sum = focal_sum_graph(
        tape,
        flat_logits,
        &batch.action,
        &act_weights,
        n_act,
        cfg.gamma,
        cfg.label_smoothing,
    );
    let act_term = if action_denom > 0.0 {
        tape.scale(act_sum, 1.0 / action_denom)
    } else {
        tape.scale(act_sum, 0.0)
    };

    let s_part = tape.scale(scen_term, cfg.beta);
    let a_part = tape.scale(act_term, 1.0 - cfg.beta);
    let total = tape.add(s_part, a_part);
    (total, scen_term, act_term)
}

/// Dropout seeding for one gradient computation. Masks derive from
/// `(master, scope, chunk index)`, so results are independent of how chunks
/// are scheduled.
pub enum DropoutSpec {
    Off,
    Seeded { master: u64, scope: String },
}

/// Exact loss and gradients of the combined objective over `batch`,
/// micro-batched `chunk_seqs` sequences per tape. Chunks may evaluate in
/// parallel; accumulation always folds in chunk order, so the result is
/// bit-identical regardless of thread count.
pub fn compute_gradients(
    params: &ParamSet,
    model_cfg: &ModelConfig,
    batch: &Batch,
    loss_cfg: &LossConfig,
    chunk_seqs: usize,
    dropout: &DropoutSpec,
) -> Result<(LossParts, ParamSet), CoreError> {
    let b = batch.len();
    assert!(b > 0, "empty batch");
    let s = model_cfg.seq_len;
    assert_eq!(batch.windows.shape()[0], b * s, "windows/sequence mismatch");
    assert_eq!(batch.action.len(), b * s);
    assert_eq!(batch.action_weight.len(), b * s);

    let weight_sum: f64 = batch.action_weight.iter().sum();
    let action_empty = weight_sum <= 0.0;
    let scen_denom = b as f64;
    let chunk = chunk_seqs.max(1);
    let n_chunks = b.div_ceil(chunk);

    let results: Vec<Result<(f64, f64, f64, ParamSet), CoreError>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(b);
            let sub = batch.slice_seqs(lo, hi, s);
            let mut tape = Tape::new();
            let pn = ParamNodes::bind(&mut tape, params, true);
            let x = tape.constant(sub.windows.clone());
            let mut mode_rng;
            let mut mode = match dropout {
                DropoutSpec::Off => DropoutMode::Eval,
                DropoutSpec::Seeded { master, scope } => {
                    mode_rng = stream(*master, &format!("{scope}/chunk{ci}"));
                    DropoutMode::Train(&mut mode_rng)
                }
            };
            let out = forward(&mut tape, &pn, model_cfg, x, hi - lo, &mut mode);
            let (total, scen, act) =
                build_loss_graph(&mut tape, &out, &sub, loss_cfg, scen_denom, weight_sum);
            let grads_tape = tape.backward(total);
            let mut grads = params.zeros_like();
            for (i, &id) in pn.ids().iter().enumerate() {
                if let Some(g) = grads_tape.get(id) {
                    *grads.tensor_mut(i) = g.clone();
                }
            }
            Ok((
                tape.scalar(total),
                tape.scalar(scen),
                tape.scalar(act),
                grads,
            ))
        })
        .collect();

    let mut total = 0.0;
    let mut scen = 0.0;
    let mut act = 0.0;
    let mut grads = params.zeros_like();
    for r in results {
        let (t, sc, ac, g) = r?;
        total += t;
        scen += sc;
        act += ac;
        for i in 0..grads.n_tensors() {
            *grads.tensor_mut(i) += g.tensor(i);
        }
    }

    if !total.is_finite() {
        return Err(CoreError::InvalidData(format!("non-finite loss {total}")));
    }
    for i in 0..grads.n_tensors() {
        if grads.tensor(i).iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidData(format!(
                "non-finite gradient in {}",
                grads.name(i)
            )));
        }
    }

    Ok((
        LossParts {
            total,
            scenario: scen,
            action: act,
            action_empty,
        },
        grads,
    ))
}

/// Loss only (no gradients): same math over constant-bound parameters.
pub fn compute_loss(
    params: &ParamSet,
    model_cfg: &ModelConfig,
    batch: &Batch,
    loss_cfg: &LossConfig,
    chunk_seqs: usize,
) -> LossParts {
    let b = batch.len();
    let s = model_cfg.seq_len;
    let weight_sum: f64 = batch.action_weight.iter().sum();
    let scen_denom = b as f64;
    let chunk = chunk_seqs.max(1);
    let n_chunks = b.div_ceil(chunk);
    let sums: Vec<(f64, f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(b);
            let sub = batch.slice_seqs(lo, hi, s);
            let mut tape = Tape::new();
            let pn = ParamNodes::bind(&mut tape, params, false);
            let x = tape.constant(sub.windows.clone());
            let out = forward(&mut tape, &pn, model_cfg, x, hi - lo, &mut DropoutMode::Eval);
            let (total, scen, act) =
                build_loss_graph(&mut tape, &out, &sub, loss_cfg, scen_denom, weight_sum);
            (tape.scalar(total), tape.scalar(scen), tape.scalar(act))
        })
        .collect();
    let (mut total, mut scen, mut act) = (0.0, 0.0, 0.0);
    for (t, sc, ac) in sums {
        total += t;
        scen += sc;
        act += ac;
    }
    LossParts {
        total,
        scenario: scen,
        action: act,
        action_empty: weight_sum <= 0.0,
    }
}

/// Single-sample multi-task loss (the batch path with `B = 1`).
pub fn multitask_loss(
    params: &ParamSet,
    model_cfg: &ModelConfig,
    sample: &Batch,
    loss_cfg: &LossConfig,
) -> LossParts {
    assert_eq!(sample.len(), 1, "multitask_loss takes a single sequence");
    compute_loss(params, model_cfg, sample, loss_cfg, 1)
}
