//! The epoch loop: shuffled mini-batches, gradient clipping, AdamW, an EMA
//! shadow for evaluation, cosine learning-rate scheduling, and early
//! stopping on validation action F1.
//!
//! Every random draw comes from a scoped stream of the run seed (epoch
//! shuffles, augmentation, dropout), so a run is bit-reproducible and
//! independent of scheduling.

use crate::ad::Tape;
use crate::config::{AugmentConfig, LossConfig, ModelConfig, OptimConfig};
use crate::dataset::PreparedCorpus;
use crate::error::CoreError;
use crate::model::{forward, init_params, DropoutMode, ParamNodes, ParamSet};
use crate::rng::{stream, stream_n};
use crate::signal::SequenceSample;
use crate::train::loss::{compute_gradients, Batch, DropoutSpec};
use crate::train::metrics::{ConfusionMatrix, Metrics};
use crate::train::optim::{adamw_step, clip_global_norm, ema_update, AdamState};
use crate::train::schedule::cosine_lr;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One epoch's training summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Optimizer steps taken this epoch.
    pub steps: usize,
    /// Learning rate at the epoch's last step.
    pub lr: f64,
    /// Mean combined loss per step.
    pub train_total: f64,
    pub train_scenario: f64,
    pub train_action: f64,
    /// Mean pre-clip global gradient norm.
    pub grad_norm: f64,
    /// Validation metrics from the EMA shadow.
    pub val: Metrics,
}

/// Final state of a training run.
pub struct TrainResult {
    /// Raw parameters at the best validation epoch.
    pub params: ParamSet,
    /// EMA shadow at the best validation epoch (the evaluation weights).
    pub ema: ParamSet,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose validation action F1 was highest.
    pub best_epoch: usize,
    pub best_action_f1: f64,
    /// True when patience ended the run before the epoch budget.
    pub stopped_early: bool,
}

fn argmax(vals: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in vals.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Evaluate `params` (normally the EMA shadow) on `samples`.
///
/// Action metrics count positively weighted windows only; scenario metrics
/// count every sequence. Errors if `samples` is empty or carries no
/// positively weighted action label at all.
pub fn evaluate(
    params: &ParamSet,
    model_cfg: &ModelConfig,
    prepared: &PreparedCorpus,
    samples: &[SequenceSample],
    chunk_seqs: usize,
) -> Result<Metrics, CoreError> {
    if samples.is_empty() {
        return Err(CoreError::InvalidData("nothing to evaluate".into()));
    }
    let chunk = chunk_seqs.max(1);
    let s = model_cfg.seq_len;
    let mut action_cm = ConfusionMatrix::new(model_cfg.n_actions);
    let mut scenario_cm = ConfusionMatrix::new(model_cfg.n_scenarios);
    let indices: Vec<usize> = (0..samples.len()).collect();
    for idx in indices.chunks(chunk) {
        let batch = prepared.batch(samples, idx)?;
        let bsz = idx.len();
        let mut tape = Tape::new();
        let pn = ParamNodes::bind(&mut tape, params, false);
        let x = tape.constant(batch.windows.clone());
        let out = forward(&mut tape, &pn, model_cfg, x, bsz, &mut DropoutMode::Eval);
        let action_logits = tape.value(out.action_logits);
        let scenario_logits = tape.value(out.scenario_logits);
        for b in 0..bsz {
            let pred_scen = argmax((0..model_cfg.n_scenarios).map(|c| scenario_logits[[b, c]]));
            scenario_cm.record(batch.scenario[b], pred_scen);
            for w in 0..s {
                let flat = b * s + w;
                if batch.action_weight[flat] <= 0.0 {
                    continue;
                }
                let pred = argmax((0..model_cfg.n_actions).map(|c| action_logits[[b, w, c]]));
                action_cm.record(batch.action[flat], pred);
            }
        }
    }
    if action_cm.total() == 0 {
        return Err(CoreError::InvalidData(
            "no positively weighted action labels in the evaluation set".into(),
        ));
    }
    Ok(Metrics::from_confusions(&action_cm, &scenario_cm))
}

/// Train a model on `prepared.train`, validating on `prepared.val` after
/// every epoch with the EMA weights.
///
/// The returned parameters are the raw/EMA pair from the epoch with the
/// best validation action F1 (first such epoch on ties). `patience` > 0
/// stops the run once that best epoch is `patience` epochs in the past;
/// `augment` applies the training-only input perturbations.
pub fn train(
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    optim_cfg: &OptimConfig,
    prepared: &PreparedCorpus,
    augment: Option<&AugmentConfig>,
    seed: u64,
) -> Result<TrainResult, CoreError> {
    train_logged(model_cfg, loss_cfg, optim_cfg, prepared, augment, seed, |_| {})
}

/// [`train`] with a per-epoch observer, called after each epoch's record is
/// final; the observer does not influence the run.
pub fn train_logged(
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    optim_cfg: &OptimConfig,
    prepared: &PreparedCorpus,
    augment: Option<&AugmentConfig>,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainResult, CoreError> {
    if prepared.train.is_empty() || prepared.val.is_empty() {
        return Err(CoreError::InvalidConfig(
            "training needs non-empty train and val splits".into(),
        ));
    }
    if optim_cfg.epochs == 0 || optim_cfg.batch_size == 0 {
        return Err(CoreError::InvalidConfig(
            "optimizer epochs and batch size must be positive".into(),
        ));
    }
    let n = prepared.train.len();
    let steps_per_epoch = n.div_ceil(optim_cfg.batch_size);
    let total_steps = optim_cfg.epochs * steps_per_epoch;
    let warmup_steps = optim_cfg.warmup_epochs * steps_per_epoch;
    let eval_chunk = optim_cfg.micro_batch.max(8);

    let mut params = init_params(model_cfg, stream(seed, "train/init").gen());
    let mut ema = params.clone();
    let mut adam = AdamState::new(&params);

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, f64, ParamSet, ParamSet)> = None;
    let mut stopped_early = false;
    let mut global_step = 0usize;

    for epoch in 1..=optim_cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_n(seed, "train/epoch-shuffle", epoch as u64));

        let mut sum_total = 0.0;
        let mut sum_scen = 0.0;
        let mut sum_act = 0.0;
        let mut sum_norm = 0.0;
        let mut lr = 0.0;
        let mut steps = 0usize;
        for idx in order.chunks(optim_cfg.batch_size) {
            global_step += 1;
            let batch: Batch = match augment {
                Some(cfg) => {
                    let mut rng = stream_n(seed, "train/augment", global_step as u64);
                    prepared.batch_augmented(&prepared.train, idx, cfg, &mut rng)?
                }
                None => prepared.batch(&prepared.train, idx)?,
            };
            let dropout = DropoutSpec::Seeded {
                master: seed,
                scope: format!("train/dropout/step{global_step}"),
            };
            let (parts, mut grads) = compute_gradients(
                &params,
                model_cfg,
                &batch,
                loss_cfg,
                optim_cfg.micro_batch,
                &dropout,
            )?;
            sum_norm += clip_global_norm(&mut grads, optim_cfg.clip_norm);
            lr = cosine_lr(
                global_step,
                total_steps,
                warmup_steps,
                optim_cfg.lr,
                optim_cfg.min_lr_factor,
            );
            adamw_step(&mut params, &grads, &mut adam, optim_cfg, lr)?;
            ema_update(&mut ema, &params, optim_cfg.ema_decay);
            sum_total += parts.total;
            sum_scen += parts.scenario;
            sum_act += parts.action;
            steps += 1;
        }

        let val = evaluate(&ema, model_cfg, prepared, &prepared.val, eval_chunk)?;
        let improved = match &best {
            None => true,
            Some((_, f1, _, _)) => val.action_macro_f1 > *f1,
        };
        if improved {
            best = Some((epoch, val.action_macro_f1, params.clone(), ema.clone()));
        }
        history.push(EpochRecord {
            epoch,
            steps,
            lr,
            train_total: sum_total / steps as f64,
            train_scenario: sum_scen / steps as f64,
            train_action: sum_act / steps as f64,
            grad_norm: sum_norm / steps as f64,
            val,
        });
        on_epoch(history.last().unwrap());
        let best_epoch = best.as_ref().map(|(e, ..)| *e).unwrap();
        if optim_cfg.patience > 0 && epoch - best_epoch >= optim_cfg.patience {
            stopped_early = epoch < optim_cfg.epochs;
            break;
        }
    }

    let (best_epoch, best_action_f1, best_params, best_ema) = best.unwrap();
    Ok(TrainResult {
        params: best_params,
        ema: best_ema,
        history,
        best_epoch,
        best_action_f1,
        stopped_early,
    })
}
