//! Optimizer stack: global-norm clipping, decoupled weight decay with
//! adaptive moments and bias correction, and an EMA shadow for evaluation.

use crate::config::OptimConfig;
use crate::error::CoreError;
use crate::model::ParamSet;
use ndarray::Zip;

/// Adaptive-moment state. Created zeroed; `t` counts applied steps for bias
/// correction.
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> AdamState {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Sub-threshold gradients pass through untouched. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for i in 0..grads.n_tensors() {
        sq += grads.tensor(i).iter().map(|&g| g * g).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for i in 0..grads.n_tensors() {
            grads.tensor_mut(i).mapv_inplace(|g| g * scale);
        }
    }
    norm
}

/// One decoupled-weight-decay adaptive update at learning rate `lr`.
/// Decay applies only to tensors flagged for it (weight matrices; biases and
/// normalization parameters are exempt) and is scaled by `lr` like the
/// moment step. Non-finite gradients abort before any mutation.
pub fn adamw_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    cfg: &OptimConfig,
    lr: f64,
) -> Result<(), CoreError> {
    params.check_compatible(grads)?;
    for i in 0..grads.n_tensors() {
        if grads.tensor(i).iter().any(|g| !g.is_finite()) {
            return Err(CoreError::InvalidData(format!(
                "non-finite gradient in {}, step skipped",
                grads.name(i)
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.n_tensors() {
        let decay = if params.decays(i) { cfg.weight_decay } else { 0.0 };
        let g = grads.tensor(i);
        let m = state.m.tensor_mut(i);
        Zip::from(&mut *m).and(g).for_each(|m, &g| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        });
        let v = state.v.tensor_mut(i);
        Zip::from(&mut *v).and(g).for_each(|v, &g| {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        });
        let p = params.tensor_mut(i);
        Zip::from(&mut *p)
            .and(&*state.m.tensor(i))
            .and(&*state.v.tensor(i))
            .for_each(|p, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p -= lr * (mhat / (vhat.sqrt() + cfg.eps) + decay * *p);
            });
    }
    Ok(())
}

/// Move the EMA shadow toward the current parameters:
/// `ema ← d·ema + (1−d)·param`.
pub fn ema_update(ema: &mut ParamSet, params: &ParamSet, decay: f64) {
    for i in 0..ema.n_tensors() {
        let p = params.tensor(i);
        Zip::from(ema.tensor_mut(i)).and(p).for_each(|e, &p| {
            *e = decay * *e + (1.0 - decay) * p;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::init_params;

    fn tiny_params(seed: u64) -> ParamSet {
        init_params(&ModelConfig::tiny(), seed)
    }

    fn global_norm(g: &ParamSet) -> f64 {
        let mut sq = 0.0;
        for i in 0..g.n_tensors() {
            sq += g.tensor(i).iter().map(|&x| x * x).sum::<f64>();
        }
        sq.sqrt()
    }

    #[test]
    fn clipping_contract() {
        let params = tiny_params(1);
        // Build gradients with a known global norm of 5.
        let mut grads = params.zeros_like();
        let n = grads.scalar_count();
        let per = 5.0 / (n as f64).sqrt();
        for i in 0..grads.n_tensors() {
            grads.tensor_mut(i).mapv_inplace(|_| per);
        }
        assert!((global_norm(&grads) - 5.0).abs() < 1e-9);
        let pre = clip_global_norm(&mut grads, 1.0);
        assert!((pre - 5.0).abs() < 1e-9);
        assert!((global_norm(&grads) - 1.0).abs() < 1e-6);

        // Sub-threshold gradients are untouched (bit-identical).
        let mut small = params.zeros_like();
        for i in 0..small.n_tensors() {
            small.tensor_mut(i).mapv_inplace(|_| per / 100.0);
        }
        let before: Vec<u64> = (0..small.n_tensors())
            .flat_map(|i| small.tensor(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        clip_global_norm(&mut small, 1.0);
        let after: Vec<u64> = (0..small.n_tensors())
            .flat_map(|i| small.tensor(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_grads_no_decay_is_noop_and_ema_moves() {
        let mut params = tiny_params(2);
        let snapshot = params.clone();
        let grads = params.zeros_like();
        let mut st = AdamState::new(&params);
        let cfg = OptimConfig {
            weight_decay: 0.0,
            ..OptimConfig::default()
        };
        adamw_step(&mut params, &grads, &mut st, &cfg, 1e-3).unwrap();
        for i in 0..params.n_tensors() {
            for (a, b) in params.tensor(i).iter().zip(snapshot.tensor(i).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let mut ema = params.zeros_like();
        ema_update(&mut ema, &params, 0.5);
        let p0 = params.tensor(0).iter().next().unwrap();
        let e0 = ema.tensor(0).iter().next().unwrap();
        assert!((e0 - 0.5 * p0).abs() < 1e-15);
        // Decay 0 → EMA equals params after one step.
        let mut ema0 = params.zeros_like();
        ema_update(&mut ema0, &params, 0.0);
        for i in 0..params.n_tensors() {
            for (a, b) in ema0.tensor(i).iter().zip(params.tensor(i).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn weight_decay_only_touches_flagged_tensors() {
        let mut params = tiny_params(3);
        let snapshot = params.clone();
        let grads = params.zeros_like();
        let mut st = AdamState::new(&params);
        let cfg = OptimConfig {
            weight_decay: 0.1,
            ..OptimConfig::default()
        };
        adamw_step(&mut params, &grads, &mut st, &cfg, 1e-2).unwrap();
        for i in 0..params.n_tensors() {
            let changed = params
                .tensor(i)
                .iter()
                .zip(snapshot.tensor(i).iter())
                .any(|(a, b)| a != b);
            // Zero-init tensors (biases) can't show decay even if flagged, so
            // only assert on tensors with nonzero content.
            let nonzero = snapshot.tensor(i).iter().any(|&v| v != 0.0);
            if params.decays(i) && nonzero {
                assert!(changed, "{} should have decayed", params.name(i));
            }
            if !params.decays(i) {
                assert!(!changed, "{} must not decay", params.name(i));
            }
        }
    }

    #[test]
    fn non_finite_grads_abort_without_mutation() {
        let mut params = tiny_params(4);
        let snapshot = params.clone();
        let mut grads = params.zeros_like();
        grads.tensor_mut(0)[[0, 0]] = f64::NAN;
        let mut st = AdamState::new(&params);
        let cfg = OptimConfig::default();
        assert!(adamw_step(&mut params, &grads, &mut st, &cfg, 1e-3).is_err());
        assert_eq!(st.steps(), 0);
        for i in 0..params.n_tensors() {
            for (a, b) in params.tensor(i).iter().zip(snapshot.tensor(i).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn adamw_matches_scalar_reference() {
        // One parameter, two steps, against a hand-rolled scalar AdamW.
        let mut params = tiny_params(5);
        let mut st = AdamState::new(&params);
        let cfg = OptimConfig {
            weight_decay: 0.01,
            ..OptimConfig::default()
        };
        let lr = 1e-3;
        let p0 = params.tensor(0)[[0, 0]];
        let g1 = 0.3;
        let g2 = -0.7;

        let mut grads = params.zeros_like();
        grads.tensor_mut(0)[[0, 0]] = g1;
        adamw_step(&mut params, &grads, &mut st, &cfg, lr).unwrap();
        grads.tensor_mut(0)[[0, 0]] = g2;
        adamw_step(&mut params, &grads, &mut st, &cfg, lr).unwrap();

        // Scalar reference.
        let (b1, b2, eps, wd) = (cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut p = p0;
        for (t, g) in [(1, g1), (2, g2)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            p -= lr * (mhat / (vhat.sqrt() + eps) + wd * p);
        }
        let got = params.tensor(0)[[0, 0]];
        assert!((got - p).abs() < 1e-15, "{got} vs {p}");
    }
}
