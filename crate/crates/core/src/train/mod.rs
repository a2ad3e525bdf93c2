//! Training stack: the multi-task focal loss and its gradient computation,
//! the optimizer (global-norm clipping + decoupled weight decay + EMA),
//! the cosine learning-rate schedule, evaluation metrics, the epoch loop,
//! and the task-weight sweep.

pub mod loss;
pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod sweep;
pub mod trainer;

pub use loss::{
    compute_gradients, compute_loss, focal_loss, multitask_loss, Batch, DropoutSpec, LossParts,
};
pub use metrics::{confusion, ConfusionMatrix, Metrics};
pub use optim::{adamw_step, clip_global_norm, ema_update, AdamState};
pub use schedule::cosine_lr;
pub use sweep::{beta_sweep, pareto_front, SweepPoint};
pub use trainer::{evaluate, train, train_logged, EpochRecord, TrainResult};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LossConfig, ModelConfig};
    use crate::model::{init_params, ParamSet};
    use ndarray::{ArrayD, IxDyn};
    use rand::Rng;

    fn tiny_batch(cfg: &ModelConfig, n_seqs: usize, seed: u64) -> Batch {
        let mut rng = crate::rng::stream(seed, "train/test-batch");
        let n_windows = n_seqs * cfg.seq_len;
        let windows = ArrayD::from_shape_fn(
            IxDyn(&[n_windows, cfg.window_len, cfg.in_channels]),
            |_| rng.gen_range(-1.0..1.0),
        );
        let scenario = (0..n_seqs).map(|_| rng.gen_range(0..cfg.n_scenarios)).collect();
        let action = (0..n_windows).map(|_| rng.gen_range(0..cfg.n_actions)).collect();
        let action_weight = (0..n_windows)
            .map(|i| if i % 5 == 3 { 0.0 } else { rng.gen_range(0.4..1.0) })
            .collect();
        Batch {
            windows,
            scenario,
            action,
            action_weight,
        }
    }

    /// Analytic gradients against central finite differences of the full
    /// multi-task loss, spot-checked on a handful of coordinates in every
    /// parameter tensor (first, last, and a seeded interior pick).
    #[test]
    fn model_gradients_match_finite_differences() {
        let cfg = ModelConfig::tiny();
        let loss_cfg = LossConfig::default();
        let params = init_params(&cfg, 11);
        let batch = tiny_batch(&cfg, 2, 12);

        let (_, grads) =
            compute_gradients(&params, &cfg, &batch, &loss_cfg, 2, &DropoutSpec::Off).unwrap();

        let eval = |p: &ParamSet| -> f64 { compute_loss(p, &cfg, &batch, &loss_cfg, 2).total };

        let h = 1e-4;
        let mut rng = crate::rng::stream(13, "train/fd-coords");
        let mut checked = 0usize;
        for ti in 0..params.n_tensors() {
            let len = params.tensor(ti).len();
            let mut coords = vec![0, len - 1];
            coords.push(rng.gen_range(0..len));
            coords.dedup();
            for &ci in &coords {
                let mut probe = params.clone();
                let base = probe.tensor(ti).as_slice().unwrap()[ci];
                probe.tensor_mut(ti).as_slice_mut().unwrap()[ci] = base + h;
                let up = eval(&probe);
                probe.tensor_mut(ti).as_slice_mut().unwrap()[ci] = base - h;
                let down = eval(&probe);
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensor(ti).as_slice().unwrap()[ci];
                let denom = analytic.abs().max(numeric.abs()).max(1e-3);
                let rel = (analytic - numeric).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "{}[{}]: analytic {analytic:.3e} vs numeric {numeric:.3e} (rel {rel:.2e})",
                    params.name(ti),
                    ci
                );
                checked += 1;
            }
        }
        assert!(checked > 100, "spot check covered too few coordinates");
    }

    /// With forward outputs fixed, the total loss is affine in the task
    /// weight: L(beta) = beta * L_scen + (1 - beta) * L_act, so the value at
    /// beta = 0.5 must be the midpoint of the endpoints.
    #[test]
    fn total_loss_is_affine_in_task_weight() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg, 21);
        let batch = tiny_batch(&cfg, 2, 22);

        let at = |beta: f64| -> LossParts {
            let lc = LossConfig {
                beta,
                ..LossConfig::default()
            };
            compute_loss(&params, &cfg, &batch, &lc, 2)
        };
        let l0 = at(0.0);
        let l1 = at(1.0);
        let lmid = at(0.5);

        assert!((l0.total - l0.action).abs() < 1e-12);
        assert!((l1.total - l1.scenario).abs() < 1e-12);
        assert!(
            (lmid.total - 0.5 * (l0.total + l1.total)).abs() < 1e-9,
            "midpoint {} vs {}",
            lmid.total,
            0.5 * (l0.total + l1.total)
        );
        // The per-task terms themselves don't depend on beta.
        assert!((l0.scenario - l1.scenario).abs() < 1e-12);
        assert!((l0.action - l1.action).abs() < 1e-12);
    }

    #[test]
    fn task_weight_endpoints_zero_the_other_heads_gradient() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg, 31);
        let batch = tiny_batch(&cfg, 1, 32);

        let grads_at = |beta: f64| -> ParamSet {
            let lc = LossConfig {
                beta,
                ..LossConfig::default()
            };
            compute_gradients(&params, &cfg, &batch, &lc, 1, &DropoutSpec::Off)
                .unwrap()
                .1
        };

        // beta = 0: pure action loss, so the scenario head sees no signal.
        let g0 = grads_at(0.0);
        let idx = |name: &str| -> usize {
            (0..g0.n_tensors()).find(|&i| g0.name(i) == name).unwrap()
        };
        for name in ["head.scenario.w", "head.scenario.b"] {
            let t = g0.tensor(idx(name));
            assert!(t.iter().all(|&g| g == 0.0), "{name} should be silent at beta=0");
        }
        // beta = 1: pure scenario loss, so the action heads see no signal.
        let g1 = grads_at(1.0);
        for name in [
            "head.action.loc.w",
            "head.action.ctx.w",
            "head.action.gate.fc1.w",
            "head.action.gate.fc2.b",
        ] {
            let t = g1.tensor(idx(name));
            assert!(t.iter().all(|&g| g == 0.0), "{name} should be silent at beta=1");
        }
        // Shared trunk still learns at both endpoints.
        let stem = idx("wle.stem.w");
        assert!(g0.tensor(stem).iter().any(|&g| g != 0.0));
        assert!(g1.tensor(stem).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn all_zero_window_weights_drop_the_action_term() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg, 41);
        let mut batch = tiny_batch(&cfg, 2, 42);
        for w in &mut batch.action_weight {
            *w = 0.0;
        }
        let (parts, grads) =
            compute_gradients(&params, &cfg, &batch, &LossConfig::default(), 2, &DropoutSpec::Off)
                .unwrap();
        assert!(parts.action_empty);
        assert_eq!(parts.action, 0.0);
        assert!((parts.total - LossConfig::default().beta * parts.scenario).abs() < 1e-12);
        for i in 0..grads.n_tensors() {
            assert!(grads.tensor(i).iter().all(|g| g.is_finite()));
        }
    }

    /// Chunked gradient accumulation must reproduce the single-tape result:
    /// denominators are computed batch-wide, so partial sums add up exactly.
    #[test]
    fn micro_batching_preserves_gradients() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg, 51);
        let batch = tiny_batch(&cfg, 4, 52);
        let lc = LossConfig::default();

        let (parts_full, grads_full) =
            compute_gradients(&params, &cfg, &batch, &lc, 4, &DropoutSpec::Off).unwrap();
        let (parts_chunked, grads_chunked) =
            compute_gradients(&params, &cfg, &batch, &lc, 1, &DropoutSpec::Off).unwrap();

        assert!((parts_full.total - parts_chunked.total).abs() < 1e-12);
        for i in 0..grads_full.n_tensors() {
            let a = grads_full.tensor(i);
            let b = grads_chunked.tensor(i);
            for (x, y) in a.iter().zip(b.iter()) {
                let denom = x.abs().max(y.abs()).max(1.0);
                assert!(
                    (x - y).abs() / denom < 1e-10,
                    "{} diverges between chunkings",
                    grads_full.name(i)
                );
            }
        }
    }

    #[test]
    fn gradient_computation_is_deterministic() {
        let mut cfg = ModelConfig::tiny();
        cfg.dropout_wle = 0.2;
        cfg.dropout_wat = 0.1;
        let params = init_params(&cfg, 61);
        let batch = tiny_batch(&cfg, 2, 62);
        let lc = LossConfig::default();
        let spec = DropoutSpec::Seeded {
            master: 99,
            scope: "det-check".to_string(),
        };
        let (p1, g1) = compute_gradients(&params, &cfg, &batch, &lc, 1, &spec).unwrap();
        let (p2, g2) = compute_gradients(&params, &cfg, &batch, &lc, 1, &spec).unwrap();
        assert_eq!(p1.total.to_bits(), p2.total.to_bits());
        for i in 0..g1.n_tensors() {
            for (a, b) in g1.tensor(i).iter().zip(g2.tensor(i).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
