//! Learning-rate schedule: linear warmup into a cosine decay with a floor.

/// Learning rate at `step` (1-based across the run, in optimizer steps).
///
/// During warmup the rate ramps linearly from 0 at step 0 to `base_lr` at
/// `warmup_steps`; afterwards it follows a half-cosine from `base_lr` down to
/// `base_lr·min_factor` at `total_steps`.
pub fn cosine_lr(
    step: usize,
    total_steps: usize,
    warmup_steps: usize,
    base_lr: f64,
    min_factor: f64,
) -> f64 {
    debug_assert!(step <= total_steps);
    if warmup_steps > 0 && step <= warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if total_steps <= warmup_steps {
        return base_lr;
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    let progress = progress.clamp(0.0, 1.0);
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    base_lr * (min_factor + (1.0 - min_factor) * cos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_endpoints() {
        let base = 1e-4;
        assert_eq!(cosine_lr(0, 100, 10, base, 0.2), 0.0);
        assert!((cosine_lr(5, 100, 10, base, 0.2) - base / 2.0).abs() < 1e-18);
        assert!((cosine_lr(10, 100, 10, base, 0.2) - base).abs() < 1e-18);
    }

    #[test]
    fn cosine_endpoints_and_floor() {
        let base = 1e-4;
        let end = cosine_lr(100, 100, 10, base, 0.2);
        assert!((end - base * 0.2).abs() < 1e-18);
        // Midpoint of the cosine phase sits halfway between base and floor.
        let mid = cosine_lr(55, 100, 10, base, 0.2);
        assert!((mid - base * 0.6).abs() < 1e-12);
        // Monotone non-increasing after warmup.
        let mut prev = cosine_lr(10, 100, 10, base, 0.2);
        for s in 11..=100 {
            let lr = cosine_lr(s, 100, 10, base, 0.2);
            assert!(lr <= prev + 1e-18);
            assert!(lr >= base * 0.2 - 1e-18);
            prev = lr;
        }
    }

    #[test]
    fn no_warmup_starts_at_base() {
        let lr = cosine_lr(0, 50, 0, 1.0, 0.1);
        assert!((lr - 1.0).abs() < 1e-15);
    }
}
