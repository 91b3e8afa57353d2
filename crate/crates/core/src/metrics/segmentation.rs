//! Dice similarity for hard masks.

use super::MetricError;

/// `(2|A∩B| + smooth) / (|A| + |B| + smooth)`. With `smooth > 0` two empty
/// masks score 1.
pub fn dsc(pred: &[bool], truth: &[bool], smooth: f64) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::Invalid(format!("mask sizes differ: {} vs {}", pred.len(), truth.len())));
    }
    let (mut inter, mut a, mut b) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        inter += (p && t) as u64;
        a += p as u64;
        b += t as u64;
    }
    let denom = (a + b) as f64 + smooth;
    if denom == 0.0 {
        return Err(MetricError::Undefined("both masks empty with smooth = 0".into()));
    }
    Ok((2.0 * inter as f64 + smooth) / denom)
}

/// Dice of one class in label rasters.
pub fn dsc_class(pred: &[u8], truth: &[u8], class: u8, smooth: f64) -> Result<f64, MetricError> {
    let p: Vec<bool> = pred.iter().map(|&v| v == class).collect();
    let t: Vec<bool> = truth.iter().map(|&v| v == class).collect();
    dsc(&p, &t, smooth)
}

/// Mean Dice over foreground classes `1..classes` (class 0 is background).
pub fn mean_foreground_dsc(pred: &[u8], truth: &[u8], classes: usize, smooth: f64) -> Result<f64, MetricError> {
    if classes < 2 {
        return Err(MetricError::Invalid("need background plus at least one class".into()));
    }
    let mut total = 0.0;
    for c in 1..classes {
        total += dsc_class(pred, truth, c as u8, smooth)?;
    }
    Ok(total / (classes - 1) as f64)
}

/// Mean DSC over the positive cases only.
pub fn dice_pos(per_case: &[f64], positive: &[bool]) -> Result<f64, MetricError> {
    if per_case.len() != positive.len() {
        return Err(MetricError::Invalid("case/flag length mismatch".into()));
    }
    let picked: Vec<f64> = per_case.iter().zip(positive).filter(|(_, &p)| p).map(|(&d, _)| d).collect();
    if picked.is_empty() {
        return Err(MetricError::Undefined("DicePos needs at least one positive case".into()));
    }
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}
