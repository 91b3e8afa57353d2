//! Runtime dispatch over the four probe architectures.

use rand_chacha::ChaCha8Rng;

use super::config::Architecture;
use super::conv::ConvModel;
use super::mlp::MlpModel;
use super::model::{Prediction, ProbeModel, Sample};
use super::multitask::MultitaskModel;
use super::seg::SegModel;
use super::TrainError;
use crate::metrics::MetricError;
use crate::nn::ParamLayout;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub enum AnyModel {
    Mlp(MlpModel),
    Conv(ConvModel),
    Seg(SegModel),
    Multitask(MultitaskModel),
}

impl AnyModel {
    pub fn from_architecture(arch: &Architecture) -> Result<Self, TrainError> {
        Ok(match arch {
            Architecture::Mlp(c) => Self::Mlp(MlpModel::new(c.clone())?),
            Architecture::Conv(c) => Self::Conv(ConvModel::new(c.clone())?),
            Architecture::Seg(c) => Self::Seg(SegModel::new(c.clone())?),
            Architecture::Multitask(c) => Self::Multitask(MultitaskModel::new(c.clone())?),
        })
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Mlp($m) => $body,
            AnyModel::Conv($m) => $body,
            AnyModel::Seg($m) => $body,
            AnyModel::Multitask($m) => $body,
        }
    };
}

impl<S: Scalar> ProbeModel<S> for AnyModel {
    fn architecture(&self) -> Architecture {
        dispatch!(self, m => ProbeModel::<S>::architecture(m))
    }

    fn layout(&self) -> &ParamLayout {
        dispatch!(self, m => ProbeModel::<S>::layout(m))
    }

    fn init(&self, seed: u64) -> Vec<S> {
        dispatch!(self, m => m.init(seed))
    }

    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError> {
        dispatch!(self, m => m.check_sample(sample))
    }

    fn accumulate(&self, params: &[S], sample: &Sample<S>, dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64 {
        dispatch!(self, m => m.accumulate(params, sample, dropout, grads))
    }

    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction {
        dispatch!(self, m => m.predict(params, sample))
    }

    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError> {
        dispatch!(self, m => m.score(predictions, samples))
    }
}
