//! Lightweight heads trained on frozen embeddings.

pub mod any;
pub mod config;
pub mod conv;
pub mod dataset;
pub mod io;
pub mod mlp;
pub mod model;
pub mod multitask;
pub mod objective;
pub mod seg;
pub mod trainer;

pub use any::AnyModel;
pub use config::{
    Architecture, ConvLayerSpec, ConvProbeConfig, LinearSegDecoderConfig, Loss, MlpProbeConfig, MultitaskConfig,
    TrainSchedule,
};
pub use conv::ConvModel;
pub use dataset::{build_samples, label_target, InputSpec};
pub use io::{load_probe, probe_from_bytes, probe_to_bytes, save_probe};
pub use mlp::MlpModel;
pub use model::{classification_score, segmentation_score, MaskTarget, Prediction, ProbeModel, Sample, Target};
pub use multitask::MultitaskModel;
pub use objective::ProbeObjective;
pub use seg::SegModel;
pub use trainer::{
    evaluate, predict_all, train, train_conv_probe, train_linear_seg_decoder, train_mlp_probe, train_multitask,
    StopReason, TrainedProbe,
};

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid probe configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged in epoch {epoch} at learning rate {lr:e}")]
    Divergence { epoch: usize, lr: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
}
