//! Rank and confusion-matrix metrics for classification probes.

use super::MetricError;
use crate::scalar::Scalar;

/// Area under the ROC curve as the normalized Mann-Whitney statistic.
///
/// Equals `(concordant + 0.5 * tied) / (P * N)` over all positive/negative
/// pairs. Computed from midranks in O(n log n); the rank sums are
/// half-integers, so the result is exact up to the final division.
pub fn auroc<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Invalid(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::Invalid("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::Undefined("AUROC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks<S: Scalar>(values: &[S]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Mean AUROC over label columns that contain both classes.
///
/// `scores` and `labels` are row-major `n x c`. Columns with a single class are
/// skipped; if every column is skipped the metric is undefined.
pub fn mean_auroc<S: Scalar>(scores: &[S], labels: &[bool], columns: usize) -> Result<f64, MetricError> {
    if columns == 0 || scores.len() != labels.len() || scores.len() % columns != 0 {
        return Err(MetricError::Invalid("score/label matrix shape mismatch".into()));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for c in 0..columns {
        let col_s: Vec<S> = scores.iter().skip(c).step_by(columns).copied().collect();
        let col_l: Vec<bool> = labels.iter().skip(c).step_by(columns).copied().collect();
        match auroc(&col_s, &col_l) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(MetricError::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(MetricError::Undefined("no label column has both classes".into()));
    }
    Ok(total / used as f64)
}

/// Square count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricError> {
        let classes = rows.len();
        if classes == 0 {
            return Err(MetricError::Invalid("empty confusion matrix".into()));
        }
        if rows.iter().any(|r| r.len() != classes) {
            return Err(MetricError::Invalid("confusion matrix must be square".into()));
        }
        Ok(Self { classes, counts: rows.concat() })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self, MetricError> {
        if truth.len() != predicted.len() {
            return Err(MetricError::Invalid("truth/prediction length mismatch".into()));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(MetricError::Invalid(format!("class index out of range ({t}, {p})")));
            }
            m.counts[t * classes + p] += 1;
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Matthews correlation coefficient (Gorodkin's R_K for more than two classes).
///
/// Returns 0 when the denominator vanishes, e.g. when only one class is
/// predicted or present.
pub fn mcc(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    let k = m.classes();
    if k == 0 {
        return Err(MetricError::Invalid("empty confusion matrix".into()));
    }
    let s = m.total() as f64;
    let correct: f64 = (0..k).map(|i| m.get(i, i) as f64).sum();
    let truth_totals: Vec<f64> = (0..k).map(|i| (0..k).map(|j| m.get(i, j) as f64).sum()).collect();
    let pred_totals: Vec<f64> = (0..k).map(|j| (0..k).map(|i| m.get(i, j) as f64).sum()).collect();
    let cross: f64 = truth_totals.iter().zip(&pred_totals).map(|(t, p)| t * p).sum();
    let pred_sq: f64 = pred_totals.iter().map(|p| p * p).sum();
    let truth_sq: f64 = truth_totals.iter().map(|t| t * t).sum();
    let denom = ((s * s - pred_sq) * (s * s - truth_sq)).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Ok(0.0);
    }
    Ok((correct * s - cross) / denom)
}

/// Binary MCC at a fixed score threshold (`score >= threshold` predicts positive).
pub fn binary_mcc<S: Scalar>(scores: &[S], labels: &[bool], threshold: S) -> Result<f64, MetricError> {
    let truth: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let pred: Vec<usize> = scores.iter().map(|&s| (s >= threshold) as usize).collect();
    mcc(&ConfusionMatrix::from_predictions(&truth, &pred, 2)?)
}
