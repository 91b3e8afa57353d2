//! Linear segmentation decoder: 1x1 convolution, bilinear upsampling, Dice loss.

use rand_chacha::ChaCha8Rng;

use super::config::{seg_channels, Architecture, LinearSegDecoderConfig};
use super::model::{segmentation_score, MaskTarget, Prediction, ProbeModel, Sample};
use super::TrainError;
use crate::metrics::MetricError;
use crate::nn::loss::{pixel_labels, soft_dice};
use crate::nn::{Bilinear, Conv2d, ParamLayout};
use crate::rng::{keyed, stream};
use crate::scalar::Scalar;

/// The 1x1 projection + upsampling head, reusable on any input map.
#[derive(Debug, Clone)]
pub(crate) struct SegHead {
    pub conv: Conv2d,
    pub classes: usize,
    pub smooth: f64,
}

impl SegHead {
    pub fn new(layout: &mut ParamLayout, input: usize, classes: usize, smooth: f64) -> Self {
        Self { conv: Conv2d::new(layout, input, seg_channels(classes), 1), classes, smooth }
    }

    pub fn init<S: Scalar>(&self, params: &mut [S], seed: u64) {
        let mut rng = keyed(seed, stream::INIT, 1);
        self.conv.init(params, &mut rng);
    }

    fn channels(&self) -> usize {
        self.conv.output
    }

    pub fn check_mask(&self, grid: (usize, usize), mask: Option<&MaskTarget>) -> Result<(), TrainError> {
        let (h, w) = grid;
        let m = mask.ok_or_else(|| TrainError::Shape("segmentation sample without mask".into()))?;
        if m.data.len() != m.h * m.w || m.h < h || m.w < w || m.h * w != m.w * h {
            return Err(TrainError::Shape(format!(
                "mask {}x{} is not an upsampled frame of the {h}x{w} patch grid",
                m.h, m.w
            )));
        }
        if let Some(&v) = m.data.iter().find(|&&v| v as usize >= self.classes) {
            return Err(TrainError::Shape(format!("mask value {v} >= {} classes", self.classes)));
        }
        Ok(())
    }

    pub fn logits<S: Scalar>(&self, params: &[S], input: &[S], h: usize, w: usize, mask: &MaskTarget) -> Vec<S> {
        let mut grid_logits = vec![S::zero(); h * w * self.channels()];
        self.conv.forward(params, input, h, w, &mut grid_logits);
        Bilinear::new(h, w, mask.h, mask.w).forward(&grid_logits, self.channels())
    }

    pub fn predict_mask<S: Scalar>(&self, params: &[S], input: &[S], h: usize, w: usize, mask: &MaskTarget) -> Vec<u8> {
        pixel_labels(&self.logits(params, input, h, w, mask), self.channels())
    }

    /// Dice loss of the head; gradients are scaled by `weight`. Returns the
    /// unscaled loss and, if requested, the scaled gradient w.r.t. `input`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_backward<S: Scalar>(
        &self,
        params: &[S],
        input: &[S],
        h: usize,
        w: usize,
        mask: &MaskTarget,
        weight: S,
        grads: &mut [S],
        want_input_grad: bool,
    ) -> (f64, Option<Vec<S>>) {
        let ch = self.channels();
        let up = Bilinear::new(h, w, mask.h, mask.w);
        let mut grid_logits = vec![S::zero(); h * w * ch];
        self.conv.forward(params, input, h, w, &mut grid_logits);
        let logits = up.forward(&grid_logits, ch);
        let mut dlogits = vec![S::zero(); logits.len()];
        let loss = soft_dice(&logits, ch, &mask.data, self.smooth, &mut dlogits);
        if weight != S::one() {
            dlogits.iter_mut().for_each(|g| *g *= weight);
        }
        let dgrid = up.backward(&dlogits, ch);
        if want_input_grad {
            let mut dx = vec![S::zero(); input.len()];
            self.conv.backward(params, input, h, w, &dgrid, grads, Some(&mut dx));
            (loss, Some(dx))
        } else {
            self.conv.backward(params, input, h, w, &dgrid, grads, None);
            (loss, None)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegModel {
    config: LinearSegDecoderConfig,
    head: SegHead,
    layout: ParamLayout,
}

impl SegModel {
    pub fn new(config: LinearSegDecoderConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut layout = ParamLayout::default();
        let head = SegHead::new(&mut layout, config.in_dim, config.classes, config.smooth);
        Ok(Self { config, head, layout })
    }

    pub fn config(&self) -> &LinearSegDecoderConfig {
        &self.config
    }
}

impl<S: Scalar> ProbeModel<S> for SegModel {
    fn architecture(&self) -> Architecture {
        Architecture::Seg(self.config.clone())
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<S> {
        let mut params = vec![S::zero(); self.layout.len()];
        self.head.init(&mut params, seed);
        params
    }

    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError> {
        let grid = match sample.grid {
            Some((h, w)) if h > 0 && w > 0 && sample.features.len() == h * w * self.config.in_dim => (h, w),
            _ => return Err(TrainError::Shape(format!("expected a patch grid with {} channels", self.config.in_dim))),
        };
        self.head.check_mask(grid, sample.mask.as_ref())
    }

    fn accumulate(&self, params: &[S], sample: &Sample<S>, _dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64 {
        let (h, w) = sample.grid.expect("checked");
        let mask = sample.mask.as_ref().expect("checked");
        self.head.loss_backward(params, &sample.features, h, w, mask, S::one(), grads, false).0
    }

    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction {
        let (h, w) = sample.grid.expect("checked");
        let mask = sample.mask.as_ref().expect("segmentation prediction needs the target frame");
        Prediction { scores: Vec::new(), mask: Some(self.head.predict_mask(params, &sample.features, h, w, mask)) }
    }

    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError> {
        segmentation_score(self.config.classes, self.config.smooth, predictions, samples)
    }
}
