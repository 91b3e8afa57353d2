//! Losses with their gradients w.r.t. the logits.
//!
//! Each function returns the loss of one sample (as `f64`) and writes the
//! gradient into a caller-provided buffer.

use crate::scalar::Scalar;

pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy against a class index.
pub fn cross_entropy<S: Scalar>(logits: &[S], class: usize, grad: &mut [S]) -> f64 {
    let p = softmax(logits);
    grad.iter_mut().zip(&p).for_each(|(g, &pi)| *g = pi);
    grad[class] -= S::one();
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<S>().ln();
    (lse - logits[class]).as_f64()
}

/// Mean binary cross-entropy over the outputs, computed from logits.
pub fn binary_cross_entropy<S: Scalar>(logits: &[S], targets: &[S], grad: &mut [S]) -> f64 {
    let n = S::of(logits.len() as f64);
    let mut loss = S::zero();
    for ((g, &z), &t) in grad.iter_mut().zip(logits).zip(targets) {
        loss += z.max(S::zero()) - z * t + (S::one() + (-z.abs()).exp()).ln();
        *g = (sigmoid(z) - t) / n;
    }
    (loss / n).as_f64()
}

/// Mean squared error over the outputs.
pub fn squared_error<S: Scalar>(pred: &[S], target: &[S], grad: &mut [S]) -> f64 {
    let n = S::of(pred.len() as f64);
    let mut loss = S::zero();
    for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
        let r = p - t;
        loss += r * r;
        *g = S::of(2.0) * r / n;
    }
    (loss / n).as_f64()
}

/// Probabilities per pixel from channels-last logits: a sigmoid for a single
/// channel (binary foreground), a softmax across channels otherwise.
pub fn pixel_probabilities<S: Scalar>(logits: &[S], channels: usize) -> Vec<S> {
    if channels == 1 {
        logits.iter().map(|&z| sigmoid(z)).collect()
    } else {
        logits.chunks_exact(channels).flat_map(softmax).collect()
    }
}

/// Hard label map from channels-last logits.
pub fn pixel_labels<S: Scalar>(logits: &[S], channels: usize) -> Vec<u8> {
    if channels == 1 {
        logits.iter().map(|&z| (z > S::zero()) as u8).collect()
    } else {
        logits
            .chunks_exact(channels)
            .map(|px| {
                let mut best = 0;
                for (c, &v) in px.iter().enumerate() {
                    if v > px[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Soft Dice loss `1 - mean_c (2 Σ p t + s) / (Σ p + Σ t + s)`.
///
/// With one channel the foreground probability is `sigmoid(z)` and the single
/// class is "mask value != 0". With `C > 1` channels a per-pixel softmax is
/// used and every class, background included, is averaged.
pub fn soft_dice<S: Scalar>(logits: &[S], channels: usize, mask: &[u8], smooth: f64, grad: &mut [S]) -> f64 {
    let probs = pixel_probabilities(logits, channels);
    let s = S::of(smooth);
    let classes = channels;
    let target = |px: usize, c: usize| -> S {
        let hit = if channels == 1 { mask[px] != 0 } else { mask[px] as usize == c };
        if hit {
            S::one()
        } else {
            S::zero()
        }
    };
    let mut inter = vec![S::zero(); classes];
    let mut psum = vec![S::zero(); classes];
    let mut tsum = vec![S::zero(); classes];
    for px in 0..mask.len() {
        for c in 0..classes {
            let p = probs[px * classes + c];
            let t = target(px, c);
            inter[c] += p * t;
            psum[c] += p;
            tsum[c] += t;
        }
    }
    let k = S::of(classes as f64);
    let mut dice_mean = S::zero();
    let mut dprob = vec![S::zero(); probs.len()];
    for c in 0..classes {
        let num = S::of(2.0) * inter[c] + s;
        let den = psum[c] + tsum[c] + s;
        dice_mean += num / den / k;
        for px in 0..mask.len() {
            let t = target(px, c);
            dprob[px * classes + c] = -(S::of(2.0) * t * den - num) / (den * den) / k;
        }
    }
    if channels == 1 {
        for ((g, &dp), &p) in grad.iter_mut().zip(&dprob).zip(&probs) {
            *g = dp * p * (S::one() - p);
        }
    } else {
        for ((g, dp), p) in grad.chunks_exact_mut(classes).zip(dprob.chunks_exact(classes)).zip(probs.chunks_exact(classes))
        {
            let inner: S = dp.iter().zip(p).map(|(&a, &b)| a * b).sum();
            for c in 0..classes {
                g[c] = p[c] * (dp[c] - inner);
            }
        }
    }
    (S::one() - dice_mean).as_f64()
}
