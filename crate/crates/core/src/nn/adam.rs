//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![S::zero(); len], v: vec![S::zero(); len], step: 0 }
    }
}

/// One Adam update in place.
///
/// Weight decay is decoupled: `θ ← θ - lr (m̂ / (√v̂ + ε) + wd θ)` for entries
/// flagged in `decay_mask` (all entries when `None`), plain Adam otherwise.
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut AdamState<S>,
    lr: f64,
    weight_decay: f64,
    decay_mask: Option<&[bool]>,
    cfg: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter/state length mismatch");
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
    let bc1 = S::of(1.0 - cfg.beta1.powi(t));
    let bc2 = S::of(1.0 - cfg.beta2.powi(t));
    let (lr, wd, eps) = (S::of(lr), S::of(weight_decay), S::of(cfg.eps));
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (S::one() - b1) * g;
        let v = b2 * state.v[i] + (S::one() - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let mut update = (m / bc1) / ((v / bc2).sqrt() + eps);
        if decay_mask.is_none_or(|mask| mask[i]) {
            update += wd * params[i];
        }
        params[i] -= lr * update;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![0.3f64, -1.0, 2.0];
        let before = p.clone();
        let mut st = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st, 1e-3, 0.0, None, &AdamConfig::default());
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_scalar_trace() {
        for g in [0.5f64, -3.0, 1e-3] {
            let mut p = vec![1.0f64];
            let mut st = AdamState::new(1);
            adam_step(&mut p, &[g], &mut st, 1e-4, 0.0, None, &AdamConfig::default());
            // m̂ = g, v̂ = g², so Δθ = -lr g / (|g| + ε)
            let m_hat = (0.1 * g) / (1.0 - 0.9);
            let v_hat = (0.001 * g * g) / (1.0 - 0.999);
            let expected = 1.0 - 1e-4 * (m_hat / (v_hat.sqrt() + 1e-8));
            assert_eq!(p[0], expected);
            assert!((p[0] - (1.0 - 1e-4 * g / (g.abs() + 1e-8))).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let lr = 1e-3;
        let mut p = vec![0.0f64];
        let mut st = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam_step(&mut p, &[0.7], &mut st, lr, 0.0, None, &AdamConfig::default());
            last = before - p[0];
        }
        assert!((last - lr).abs() < 1e-9 * lr.max(1.0), "{last}");
    }

    #[test]
    fn decay_mask_spares_biases() {
        let mut p = vec![1.0f64, 1.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1, 0.5, Some(&[true, false]), &AdamConfig::default());
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, 1.0]);
    }
}
