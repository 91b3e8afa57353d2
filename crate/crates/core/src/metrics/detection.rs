//! Box overlap, mAP@50 and grounding accuracy for externally produced boxes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::scalar::Scalar;

/// Axis-aligned box with a class and an optional detector confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox<S> {
    pub x_min: S,
    pub y_min: S,
    pub x_max: S,
    pub y_max: S,
    #[serde(default)]
    pub class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<S>,
}

impl<S: Scalar> ScoredBox<S> {
    pub fn new(x_min: S, y_min: S, x_max: S, y_max: S, class: usize) -> Self {
        Self { x_min, y_min, x_max, y_max, class, confidence: None }
    }

    pub fn with_confidence(mut self, confidence: S) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn area(&self) -> S {
        (self.x_max - self.x_min).max(S::zero()) * (self.y_max - self.y_min).max(S::zero())
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou<S: Scalar>(a: &ScoredBox<S>, b: &ScoredBox<S>) -> S {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(S::zero());
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(S::zero());
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= S::zero() {
        S::zero()
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: usize,
    pub ap: f64,
    pub truths: usize,
    pub predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    pub per_class: Vec<ClassAp>,
}

/// Mean average precision at an IoU threshold.
///
/// Predictions of each class are visited in descending confidence (ties by
/// image index, then position within the image) and matched to the unmatched
/// same-image, same-class truth of highest IoU (lowest index on ties) when that
/// IoU is at least `threshold`. AP is the all-points interpolated area under
/// the precision/recall curve. A class with predictions but no truths, or truths
/// but no predictions, contributes AP 0.
pub fn mean_average_precision<S: Scalar>(
    predictions: &[Vec<ScoredBox<S>>],
    truths: &[Vec<ScoredBox<S>>],
    threshold: S,
) -> Result<MapResult, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::Invalid(format!(
            "{} prediction images vs {} truth images",
            predictions.len(),
            truths.len()
        )));
    }
    let classes: BTreeSet<usize> =
        predictions.iter().chain(truths).flat_map(|img| img.iter().map(|b| b.class)).collect();
    if classes.is_empty() {
        return Err(MetricError::Undefined("no boxes at all".into()));
    }

    let mut per_class = Vec::with_capacity(classes.len());
    for &class in &classes {
        let mut ranked: Vec<(S, usize, usize)> = Vec::new();
        for (img, boxes) in predictions.iter().enumerate() {
            for (k, b) in boxes.iter().enumerate().filter(|(_, b)| b.class == class) {
                let conf = b.confidence.ok_or_else(|| {
                    MetricError::Invalid(format!("prediction {k} in image {img} has no confidence"))
                })?;
                ranked.push((conf, img, k));
            }
        }
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite confidence").then((a.1, a.2).cmp(&(b.1, b.2))));

        let truth_count: usize = truths.iter().map(|img| img.iter().filter(|b| b.class == class).count()).sum();
        let mut matched: Vec<Vec<bool>> = truths.iter().map(|img| vec![false; img.len()]).collect();
        let mut hits = Vec::with_capacity(ranked.len());
        for &(_, img, k) in &ranked {
            let pred = &predictions[img][k];
            let mut best: Option<(usize, S)> = None;
            for (t, truth) in truths[img].iter().enumerate() {
                if truth.class != class || matched[img][t] {
                    continue;
                }
                let o = iou(pred, truth);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((t, o));
                }
            }
            let hit = match best {
                Some((t, o)) if o >= threshold => {
                    matched[img][t] = true;
                    true
                }
                _ => false,
            };
            hits.push(hit);
        }
        per_class.push(ClassAp {
            class,
            ap: average_precision(&hits, truth_count),
            truths: truth_count,
            predictions: ranked.len(),
        });
    }
    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64;
    Ok(MapResult { map, per_class })
}

/// mAP at IoU 0.5.
pub fn map50<S: Scalar>(predictions: &[Vec<ScoredBox<S>>], truths: &[Vec<ScoredBox<S>>]) -> Result<f64, MetricError> {
    mean_average_precision(predictions, truths, S::of(0.5)).map(|r| r.map)
}

/// All-points interpolated AP from a ranked hit sequence.
pub fn average_precision(hits: &[bool], truth_count: usize) -> f64 {
    if truth_count == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / truth_count as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Mean over truth boxes of the best IoU with any same-image, same-class prediction.
pub fn detection_miou<S: Scalar>(
    predictions: &[Vec<ScoredBox<S>>],
    truths: &[Vec<ScoredBox<S>>],
) -> Result<f64, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::Invalid("image count mismatch".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (preds, gts) in predictions.iter().zip(truths) {
        for gt in gts {
            let best = preds.iter().filter(|p| p.class == gt.class).map(|p| iou(p, gt).as_f64()).fold(0.0, f64::max);
            total += best;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::Undefined("no truth boxes".into()));
    }
    Ok(total / n as f64)
}

/// Fraction of paired boxes whose IoU strictly exceeds `threshold`.
pub fn grounding_accuracy<S: Scalar>(
    predicted: &[ScoredBox<S>],
    truth: &[ScoredBox<S>],
    threshold: S,
) -> Result<f64, MetricError> {
    let ious = paired_ious(predicted, truth)?;
    Ok(ious.iter().filter(|&&o| o > threshold).count() as f64 / ious.len() as f64)
}

/// Mean IoU of paired boxes.
pub fn mean_iou<S: Scalar>(predicted: &[ScoredBox<S>], truth: &[ScoredBox<S>]) -> Result<f64, MetricError> {
    let ious = paired_ious(predicted, truth)?;
    Ok(ious.iter().map(|o| o.as_f64()).sum::<f64>() / ious.len() as f64)
}

fn paired_ious<S: Scalar>(predicted: &[ScoredBox<S>], truth: &[ScoredBox<S>]) -> Result<Vec<S>, MetricError> {
    if predicted.len() != truth.len() {
        return Err(MetricError::Invalid("grounding needs one prediction per truth".into()));
    }
    if predicted.is_empty() {
        return Err(MetricError::Undefined("no grounding pairs".into()));
    }
    Ok(predicted.iter().zip(truth).map(|(p, t)| iou(p, t)).collect())
}
