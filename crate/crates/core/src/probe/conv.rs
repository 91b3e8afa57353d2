//! Convolutional classifier over patch grids.

use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, ConvProbeConfig};
use super::model::{check_target, classification_loss, classification_score, output_scores, Prediction, ProbeModel, Sample};
use super::TrainError;
use crate::metrics::MetricError;
use crate::nn::layers::{global_avg_pool, global_avg_pool_backward, relu_backward, relu_in_place};
use crate::nn::{Conv2d, Dense, ParamLayout};
use crate::rng::{keyed, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ConvModel {
    config: ConvProbeConfig,
    convs: Vec<Conv2d>,
    head: Dense,
    layout: ParamLayout,
}

pub(crate) struct ConvTrace<S> {
    pub h: usize,
    pub w: usize,
    /// `maps[0]` is the input grid, `maps[l + 1]` the ReLU output of layer `l`.
    pub maps: Vec<Vec<S>>,
    /// Pre-activation of the first layer.
    pub stem: Vec<S>,
    pub pooled: Vec<S>,
    pub logits: Vec<S>,
}

impl ConvModel {
    pub fn new(config: ConvProbeConfig) -> Result<Self, TrainError> {
        let mut layout = ParamLayout::default();
        let model = Self::with_layout(config, &mut layout)?;
        Ok(Self { layout, ..model })
    }

    /// Builds the classifier inside a larger layout (used by the multitask head).
    pub(crate) fn with_layout(config: ConvProbeConfig, layout: &mut ParamLayout) -> Result<Self, TrainError> {
        config.validate()?;
        let mut input = config.in_dim;
        let mut convs = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            convs.push(Conv2d::new(layout, input, spec.channels, spec.kernel));
            input = spec.channels;
        }
        let head = Dense::new(layout, input, config.out_dim);
        Ok(Self { config, convs, head, layout: layout.clone() })
    }

    pub fn config(&self) -> &ConvProbeConfig {
        &self.config
    }

    pub(crate) fn stem_channels(&self) -> usize {
        self.convs[0].output
    }

    pub(crate) fn init_into<S: Scalar>(&self, params: &mut [S], seed: u64) {
        let mut rng = keyed(seed, stream::INIT, 0);
        self.convs.iter().for_each(|c| c.init(params, &mut rng));
        self.head.init(params, &mut rng);
    }

    pub(crate) fn check_grid<S: Scalar>(&self, sample: &Sample<S>) -> Result<(usize, usize), TrainError> {
        match sample.grid {
            Some((h, w)) if h > 0 && w > 0 && sample.features.len() == h * w * self.config.in_dim => Ok((h, w)),
            _ => Err(TrainError::Shape(format!(
                "conv probe expects a patch grid with {} channels, got {} values over {:?}",
                self.config.in_dim,
                sample.features.len(),
                sample.grid
            ))),
        }
    }

    pub(crate) fn forward<S: Scalar>(&self, params: &[S], sample: &Sample<S>) -> ConvTrace<S> {
        let (h, w) = sample.grid.expect("checked grid");
        let mut maps = vec![sample.features.clone()];
        let mut stem = Vec::new();
        for (l, conv) in self.convs.iter().enumerate() {
            let mut out = vec![S::zero(); h * w * conv.output];
            conv.forward(params, &maps[l], h, w, &mut out);
            if l == 0 {
                stem = out.clone();
            }
            relu_in_place(&mut out);
            maps.push(out);
        }
        let channels = self.convs.last().expect("non-empty").output;
        let pooled = global_avg_pool(maps.last().expect("non-empty"), h * w, channels);
        let mut logits = vec![S::zero(); self.config.out_dim];
        self.head.forward(params, &pooled, &mut logits);
        ConvTrace { h, w, maps, stem, pooled, logits }
    }

    /// Back-propagates `dlogits`; `extra_stem` is added to the gradient of the
    /// first layer's pre-activation.
    pub(crate) fn backward<S: Scalar>(
        &self,
        params: &[S],
        trace: &ConvTrace<S>,
        dlogits: &[S],
        grads: &mut [S],
        extra_stem: Option<&[S]>,
    ) {
        let (h, w) = (trace.h, trace.w);
        let mut dpooled = vec![S::zero(); self.head.input];
        self.head.backward(params, &trace.pooled, dlogits, grads, Some(&mut dpooled));
        let mut delta = global_avg_pool_backward(&dpooled, h * w);
        for (l, conv) in self.convs.iter().enumerate().rev() {
            relu_backward(&trace.maps[l + 1], &mut delta);
            if l == 0 {
                if let Some(extra) = extra_stem {
                    delta.iter_mut().zip(extra).for_each(|(d, &e)| *d += e);
                }
                conv.backward(params, &trace.maps[0], h, w, &delta, grads, None);
            } else {
                let mut dx = vec![S::zero(); h * w * conv.input];
                conv.backward(params, &trace.maps[l], h, w, &delta, grads, Some(&mut dx));
                delta = dx;
            }
        }
    }
}

impl<S: Scalar> ProbeModel<S> for ConvModel {
    fn architecture(&self) -> Architecture {
        Architecture::Conv(self.config.clone())
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<S> {
        let mut params = vec![S::zero(); self.layout.len()];
        self.init_into(&mut params, seed);
        params
    }

    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError> {
        self.check_grid(sample)?;
        check_target(self.config.loss, self.config.out_dim, sample.target.as_ref())
    }

    fn accumulate(&self, params: &[S], sample: &Sample<S>, _dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64 {
        let trace = self.forward(params, sample);
        let mut dlogits = vec![S::zero(); self.config.out_dim];
        let loss =
            classification_loss(self.config.loss, &trace.logits, sample.target.as_ref().expect("checked"), &mut dlogits);
        self.backward(params, &trace, &dlogits, grads, None);
        loss
    }

    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction {
        let trace = self.forward(params, sample);
        Prediction { scores: output_scores(self.config.loss, &trace.logits), mask: None }
    }

    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError> {
        classification_score(self.config.loss, predictions, samples)
    }
}
