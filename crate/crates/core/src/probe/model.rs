//! The interface shared by every probe head, plus sample and prediction types.

use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, Loss};
use super::TrainError;
use crate::metrics::{self, ConfusionMatrix, MetricError};
use crate::nn::ParamLayout;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Binary(bool),
    Class(usize),
    Multi(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskTarget {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

/// One training or evaluation example.
///
/// `features` holds either a CLS vector (`grid == None`) or a channels-last
/// patch grid of `h * w * d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub features: Vec<S>,
    pub grid: Option<(usize, usize)>,
    pub target: Option<Target>,
    pub mask: Option<MaskTarget>,
}

impl<S: Scalar> Sample<S> {
    pub fn vector(features: Vec<S>, target: Target) -> Self {
        Self { features, grid: None, target: Some(target), mask: None }
    }

    pub fn grid(features: Vec<S>, h: usize, w: usize) -> Self {
        Self { features, grid: Some((h, w)), target: None, mask: None }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_mask(mut self, mask: MaskTarget) -> Self {
        self.mask = Some(mask);
        self
    }
}

/// Model output for one sample: class probabilities and/or a label mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub mask: Option<Vec<u8>>,
}

pub trait ProbeModel<S: Scalar>: Sync {
    fn architecture(&self) -> Architecture;
    fn layout(&self) -> &ParamLayout;
    fn init(&self, seed: u64) -> Vec<S>;
    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError>;
    /// Adds the gradient of the sample loss to `grads` and returns the loss.
    /// Dropout (where the architecture has it) is active iff `dropout` is given.
    fn accumulate(&self, params: &[S], sample: &Sample<S>, dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64;
    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction;
    /// Validation score (higher is better) of predictions on `samples`.
    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError>;

    fn param_count(&self) -> usize {
        self.layout().len()
    }
}

/// AUROC for binary tasks, mean per-label AUROC for multi-label, MCC for
/// multi-class. An undefined AUROC falls back to MCC at threshold 0.5.
pub fn classification_score<S: Scalar>(
    loss: Loss,
    predictions: &[Prediction],
    samples: &[Sample<S>],
) -> Result<f64, MetricError> {
    let targets: Vec<&Target> = samples
        .iter()
        .map(|s| s.target.as_ref().ok_or_else(|| MetricError::Invalid("sample without target".into())))
        .collect::<Result<_, _>>()?;
    match (loss, targets.first()) {
        (_, None) => Err(MetricError::Undefined("no samples".into())),
        (Loss::CrossEntropy, _) => {
            let classes = predictions[0].scores.len();
            let mut truth = Vec::with_capacity(targets.len());
            for t in &targets {
                match t {
                    Target::Class(c) => truth.push(*c),
                    Target::Binary(b) => truth.push(*b as usize),
                    Target::Multi(_) => return Err(MetricError::Invalid("multi-label target under CE".into())),
                }
            }
            let pred: Vec<usize> = predictions.iter().map(|p| argmax(&p.scores)).collect();
            metrics::mcc(&ConfusionMatrix::from_predictions(&truth, &pred, classes)?)
        }
        (Loss::BinaryCrossEntropy, _) => {
            let columns = predictions[0].scores.len();
            let scores: Vec<f64> = predictions.iter().flat_map(|p| p.scores.iter().copied()).collect();
            let mut labels = Vec::with_capacity(scores.len());
            for t in &targets {
                match t {
                    Target::Binary(b) => labels.push(*b),
                    Target::Multi(bits) => labels.extend_from_slice(bits),
                    Target::Class(c) if columns == 1 => labels.push(*c == 1),
                    Target::Class(_) => return Err(MetricError::Invalid("class target under BCE".into())),
                }
            }
            match metrics::mean_auroc(&scores, &labels, columns) {
                Err(MetricError::Undefined(_)) => {
                    let mut total = 0.0;
                    for c in 0..columns {
                        let s: Vec<f64> = scores.iter().skip(c).step_by(columns).copied().collect();
                        let l: Vec<bool> = labels.iter().skip(c).step_by(columns).copied().collect();
                        total += metrics::binary_mcc(&s, &l, 0.5)?;
                    }
                    Ok(total / columns as f64)
                }
                other => other,
            }
        }
    }
}

/// Mean over samples of the mean foreground Dice of the predicted mask.
pub fn segmentation_score<S: Scalar>(
    classes: usize,
    smooth: f64,
    predictions: &[Prediction],
    samples: &[Sample<S>],
) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Undefined("no samples".into()));
    }
    let mut total = 0.0;
    for (p, s) in predictions.iter().zip(samples) {
        let truth = s.mask.as_ref().ok_or_else(|| MetricError::Invalid("sample without mask".into()))?;
        let pred = p.mask.as_ref().ok_or_else(|| MetricError::Invalid("prediction without mask".into()))?;
        total += metrics::mean_foreground_dsc(pred, &truth.data, classes, smooth)?;
    }
    Ok(total / samples.len() as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Writes the classification loss gradient for `target` into `grad`.
pub(crate) fn classification_loss<S: Scalar>(loss: Loss, logits: &[S], target: &Target, grad: &mut [S]) -> f64 {
    use crate::nn::loss;
    match (loss, target) {
        (Loss::CrossEntropy, Target::Class(c)) => loss::cross_entropy(logits, *c, grad),
        (Loss::CrossEntropy, Target::Binary(b)) => loss::cross_entropy(logits, *b as usize, grad),
        (Loss::BinaryCrossEntropy, t) => {
            let targets: Vec<S> = match t {
                Target::Binary(b) => vec![if *b { S::one() } else { S::zero() }],
                Target::Class(c) => vec![if *c == 1 { S::one() } else { S::zero() }],
                Target::Multi(bits) => bits.iter().map(|&b| if b { S::one() } else { S::zero() }).collect(),
            };
            loss::binary_cross_entropy(logits, &targets, grad)
        }
        (Loss::CrossEntropy, Target::Multi(_)) => unreachable!("rejected by check_sample"),
    }
}

pub(crate) fn check_target(loss: Loss, out_dim: usize, target: Option<&Target>) -> Result<(), TrainError> {
    let ok = match (loss, target) {
        (_, None) => false,
        (Loss::CrossEntropy, Some(Target::Class(c))) => *c < out_dim,
        (Loss::CrossEntropy, Some(Target::Binary(_))) => out_dim == 2,
        (Loss::CrossEntropy, Some(Target::Multi(_))) => false,
        (Loss::BinaryCrossEntropy, Some(Target::Binary(_))) => out_dim == 1,
        (Loss::BinaryCrossEntropy, Some(Target::Class(c))) => out_dim == 1 && *c < 2,
        (Loss::BinaryCrossEntropy, Some(Target::Multi(bits))) => bits.len() == out_dim,
    };
    if ok {
        Ok(())
    } else {
        Err(TrainError::Shape(format!("target {target:?} does not fit {out_dim} outputs under {loss:?}")))
    }
}

/// Class probabilities from logits.
pub(crate) fn output_scores<S: Scalar>(loss: Loss, logits: &[S]) -> Vec<f64> {
    use crate::nn::loss::{sigmoid, softmax};
    match loss {
        Loss::CrossEntropy => softmax(logits).into_iter().map(Scalar::as_f64).collect(),
        Loss::BinaryCrossEntropy => logits.iter().map(|&z| sigmoid(z).as_f64()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_validation_falls_back_to_mcc_zero() {
        let samples: Vec<Sample<f64>> = (0..4).map(|_| Sample::vector(vec![0.0], Target::Binary(false))).collect();
        let preds: Vec<Prediction> =
            [0.1, 0.2, 0.3, 0.4].iter().map(|&p| Prediction { scores: vec![p], mask: None }).collect();
        assert_eq!(classification_score(Loss::BinaryCrossEntropy, &preds, &samples).unwrap(), 0.0);
    }

    #[test]
    fn multiclass_uses_mcc() {
        let samples: Vec<Sample<f64>> = (0..3).map(|c| Sample::vector(vec![0.0], Target::Class(c))).collect();
        let preds: Vec<Prediction> = (0..3)
            .map(|c| {
                let mut s = vec![0.1; 3];
                s[c] = 0.8;
                Prediction { scores: s, mask: None }
            })
            .collect();
        assert!((classification_score(Loss::CrossEntropy, &preds, &samples).unwrap() - 1.0).abs() < 1e-12);
    }
}
