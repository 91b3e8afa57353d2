//! Dual-head probe: conv classifier plus a linear segmentation head that reads
//! the classifier's first-layer pre-activation, so mask supervision shapes the
//! shared stem.

use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, MultitaskConfig};
use super::conv::ConvModel;
use super::model::{classification_loss, classification_score, output_scores, segmentation_score, check_target, Prediction, ProbeModel, Sample};
use super::seg::SegHead;
use super::TrainError;
use crate::metrics::MetricError;
use crate::nn::ParamLayout;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct MultitaskModel {
    config: MultitaskConfig,
    classifier: ConvModel,
    seg: SegHead,
    layout: ParamLayout,
}

impl MultitaskModel {
    pub fn new(config: MultitaskConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut layout = ParamLayout::default();
        // classifier parameters come first, laid out exactly as a standalone conv probe
        let classifier = ConvModel::with_layout(config.classifier.clone(), &mut layout)?;
        let seg = SegHead::new(&mut layout, classifier.stem_channels(), config.seg_classes, config.smooth);
        Ok(Self { config, classifier, seg, layout })
    }

    pub fn config(&self) -> &MultitaskConfig {
        &self.config
    }

    /// Number of leading parameters that belong to the classification head.
    pub fn classifier_param_count(&self) -> usize {
        ProbeModel::<f64>::layout(&self.classifier).len()
    }

    /// Classification score and mean foreground Dice, evaluated separately.
    pub fn head_scores<S: Scalar>(
        &self,
        predictions: &[Prediction],
        samples: &[Sample<S>],
    ) -> Result<(f64, f64), MetricError> {
        let cls = classification_score(self.config.classifier.loss, predictions, samples)?;
        let dsc = segmentation_score(self.config.seg_classes, self.config.smooth, predictions, samples)?;
        Ok((cls, dsc))
    }
}

impl<S: Scalar> ProbeModel<S> for MultitaskModel {
    fn architecture(&self) -> Architecture {
        Architecture::Multitask(self.config.clone())
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<S> {
        let mut params = vec![S::zero(); self.layout.len()];
        self.classifier.init_into(&mut params, seed);
        self.seg.init(&mut params, seed);
        params
    }

    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError> {
        let grid = self.classifier.check_grid(sample)?;
        let cfg = &self.config.classifier;
        check_target(cfg.loss, cfg.out_dim, sample.target.as_ref())?;
        self.seg.check_mask(grid, sample.mask.as_ref())
    }

    fn accumulate(&self, params: &[S], sample: &Sample<S>, _dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64 {
        let cfg = &self.config.classifier;
        let trace = self.classifier.forward(params, sample);
        let mut dlogits = vec![S::zero(); cfg.out_dim];
        let cls_loss = classification_loss(cfg.loss, &trace.logits, sample.target.as_ref().expect("checked"), &mut dlogits);
        if self.config.lambda == 0.0 {
            self.classifier.backward(params, &trace, &dlogits, grads, None);
            return cls_loss;
        }
        let mask = sample.mask.as_ref().expect("checked");
        let (dice, dstem) =
            self.seg.loss_backward(params, &trace.stem, trace.h, trace.w, mask, S::of(self.config.lambda), grads, true);
        self.classifier.backward(params, &trace, &dlogits, grads, dstem.as_deref());
        cls_loss + self.config.lambda * dice
    }

    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction {
        let trace = self.classifier.forward(params, sample);
        let mask = sample.mask.as_ref().map(|m| self.seg.predict_mask(params, &trace.stem, trace.h, trace.w, m));
        Prediction { scores: output_scores(self.config.classifier.loss, &trace.logits), mask }
    }

    /// `(cls + lambda * dice) / (1 + lambda)`; the classification score alone when `lambda == 0`.
    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError> {
        if self.config.lambda == 0.0 {
            return classification_score(self.config.classifier.loss, predictions, samples);
        }
        let (cls, dsc) = self.head_scores(predictions, samples)?;
        Ok((cls + self.config.lambda * dsc) / (1.0 + self.config.lambda))
    }
}
