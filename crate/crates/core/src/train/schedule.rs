use std::f64::consts::PI;

/// Linear warmup from 0 to `base_lr`, then half-cosine decay to `min_lr`.
pub fn cosine_lr(step: usize, warmup_steps: usize, total_steps: usize, base_lr: f64, min_lr: f64) -> f64 {
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(warmup_steps);
    if span == 0 || step >= total_steps {
        return min_lr;
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        assert_eq!(cosine_lr(0, 10, 100, 1e-3, 1e-5), 0.0);
        assert_eq!(cosine_lr(100, 10, 100, 1e-3, 1e-5), 1e-5);
        assert_eq!(cosine_lr(0, 0, 100, 1e-3, 0.0), 1e-3);
    }

    #[test]
    fn midpoint_of_decay() {
        let lr = cosine_lr(55, 10, 100, 1e-3, 1e-5);
        assert!((lr - (1e-3 + 1e-5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_at_warmup_end() {
        let base = 7e-4;
        let before = base * 10.0 / 10.0;
        assert!((before - cosine_lr(10, 10, 100, base, 0.0)).abs() < 1e-12);
        let just_before = cosine_lr(9, 10, 100, base, 0.0);
        assert!(just_before < base);
    }
}
