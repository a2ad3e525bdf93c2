//! Task-weight sweep: train one model per mixing weight and chart the
//! action/scenario trade-off, flagging the Pareto-optimal points.

use crate::config::{AugmentConfig, LossConfig, ModelConfig, OptimConfig, SweepConfig};
use crate::dataset::PreparedCorpus;
use crate::error::CoreError;
use crate::train::trainer::train;
use serde::{Deserialize, Serialize};

/// One sweep setting's outcome (validation metrics of its best epoch).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub action_macro_f1: f64,
    pub scenario_macro_f1: f64,
    pub best_epoch: usize,
    /// No other sweep point is at least as good on both axes and strictly
    /// better on one.
    pub pareto: bool,
}

/// Pareto-optimality flags for (action F1, scenario F1) pairs under
/// maximize-both dominance.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(a, s)| {
            !points
                .iter()
                .any(|&(oa, os)| oa >= a && os >= s && (oa > a || os > s))
        })
        .collect()
}

/// Train one model per `sweep.betas` entry and score each on validation.
///
/// Every point starts from the same seed and data, differing only in the
/// task-mixing weight; `sweep.epochs` (when nonzero) shortens each point's
/// epoch budget so the sweep stays affordable.
pub fn beta_sweep(
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    optim_cfg: &OptimConfig,
    sweep: &SweepConfig,
    prepared: &PreparedCorpus,
    augment: Option<&AugmentConfig>,
    seed: u64,
) -> Result<Vec<SweepPoint>, CoreError> {
    if sweep.betas.is_empty() {
        return Err(CoreError::InvalidConfig("sweep needs at least one beta".into()));
    }
    if let Some(bad) = sweep.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(CoreError::InvalidConfig(format!(
            "sweep beta {bad} outside [0, 1]"
        )));
    }
    let mut optim = optim_cfg.clone();
    if sweep.epochs > 0 {
        optim.epochs = sweep.epochs;
        optim.warmup_epochs = optim.warmup_epochs.min(sweep.epochs / 2);
    }
    let mut points = Vec::with_capacity(sweep.betas.len());
    for &beta in &sweep.betas {
        let lc = LossConfig {
            beta,
            ..loss_cfg.clone()
        };
        let result = train(model_cfg, &lc, &optim, prepared, augment, seed)?;
        let best = &result.history[result.best_epoch - 1];
        points.push(SweepPoint {
            beta,
            action_macro_f1: best.val.action_macro_f1,
            scenario_macro_f1: best.val.scenario_macro_f1,
            best_epoch: result.best_epoch,
            pareto: false,
        });
    }
    let flags = pareto_front(
        &points
            .iter()
            .map(|p| (p.action_macro_f1, p.scenario_macro_f1))
            .collect::<Vec<_>>(),
    );
    for (p, f) in points.iter_mut().zip(flags) {
        p.pareto = f;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataConfig, SynthConfig};
    use crate::dataset::prepare_corpus;
    use crate::signal::synth_generate;

    #[test]
    fn dominated_points_are_flagged() {
        let flags = pareto_front(&[(0.8, 0.1), (0.5, 0.5), (0.9, 0.05), (0.2, 0.2)]);
        assert_eq!(flags, vec![true, true, true, false]);
        // A duplicated point neither dominates its twin nor is dominated.
        let dup = pareto_front(&[(0.5, 0.5), (0.5, 0.5)]);
        assert_eq!(dup, vec![true, true]);
        // A strictly better point on one axis with equality on the other
        // dominates.
        let edge = pareto_front(&[(0.5, 0.5), (0.5, 0.6)]);
        assert_eq!(edge, vec![false, true]);
    }

    #[test]
    fn sweep_produces_one_flagged_row_per_beta() {
        let synth = SynthConfig {
            videos: 40,
            duration_s: 3.0,
            ..SynthConfig::default()
        };
        let corpus = synth_generate(&synth, 23).unwrap();
        let data = DataConfig::default();
        let mut cfg = ModelConfig::tiny();
        cfg.window_len = data.window_len;
        let prepared = prepare_corpus(&corpus, &data, cfg.seq_len, 23).unwrap();
        let optim = OptimConfig {
            lr: 3e-3,
            batch_size: 16,
            micro_batch: 8,
            patience: 0,
            ..OptimConfig::default()
        };
        let sweep = SweepConfig {
            betas: vec![0.0, 0.3, 1.0],
            epochs: 1,
        };
        let points = beta_sweep(
            &cfg,
            &LossConfig::default(),
            &optim,
            &sweep,
            &prepared,
            None,
            23,
        )
        .unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].beta, 0.0);
        assert_eq!(points[2].beta, 1.0);
        assert!(points.iter().any(|p| p.pareto), "the front is never empty");
        for p in &points {
            assert!(p.action_macro_f1.is_finite() && p.scenario_macro_f1.is_finite());
            assert_eq!(p.best_epoch, 1);
        }
    }

    #[test]
    fn invalid_sweeps_are_rejected() {
        let sweep_empty = SweepConfig {
            betas: vec![],
            epochs: 1,
        };
        let sweep_range = SweepConfig {
            betas: vec![0.5, 1.5],
            epochs: 1,
        };
        let synth = SynthConfig {
            videos: 40,
            duration_s: 3.0,
            ..SynthConfig::default()
        };
        let corpus = synth_generate(&synth, 29).unwrap();
        let data = DataConfig::default();
        let mut cfg = ModelConfig::tiny();
        cfg.window_len = data.window_len;
        let prepared = prepare_corpus(&corpus, &data, cfg.seq_len, 29).unwrap();
        let lc = LossConfig::default();
        let oc = OptimConfig::default();
        assert!(beta_sweep(&cfg, &lc, &oc, &sweep_empty, &prepared, None, 1).is_err());
        assert!(beta_sweep(&cfg, &lc, &oc, &sweep_range, &prepared, None, 1).is_err());
    }
}
