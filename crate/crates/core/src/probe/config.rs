//! Probe architectures and the training schedule.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Softmax cross-entropy over `out_dim` classes (multi-class tasks).
    CrossEntropy,
    /// Sigmoid BCE per output (binary with one output, or multi-label).
    BinaryCrossEntropy,
}

/// 3-layer MLP over CLS embeddings: `in -> hidden[0] -> hidden[1] -> out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpProbeConfig {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub dropout: f64,
    pub loss: Loss,
}

impl MlpProbeConfig {
    /// Default bottleneck `d -> d/2 -> d/4 -> C`, ReLU, dropout 0.2.
    pub fn new(in_dim: usize, out_dim: usize, loss: Loss) -> Self {
        Self { in_dim, hidden: vec![(in_dim / 2).max(1), (in_dim / 4).max(1)], out_dim, dropout: 0.2, loss }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden.contains(&0) {
            return Err(TrainError::Config("MLP dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        validate_loss(self.loss, self.out_dim)
    }
}

fn validate_loss(loss: Loss, out_dim: usize) -> Result<(), TrainError> {
    if loss == Loss::CrossEntropy && out_dim < 2 {
        return Err(TrainError::Config("cross-entropy needs at least two outputs".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub kernel: usize,
    pub channels: usize,
}

/// Convolution stack over the patch grid (ReLU after each layer), global
/// average pooling and a linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvProbeConfig {
    pub in_dim: usize,
    pub layers: Vec<ConvLayerSpec>,
    pub out_dim: usize,
    pub loss: Loss,
}

impl ConvProbeConfig {
    /// Bottleneck `1x1 d/4 -> 3x3 d/4 -> 1x1 d`.
    pub fn bottleneck(in_dim: usize, out_dim: usize, loss: Loss) -> Self {
        let narrow = (in_dim / 4).max(1);
        Self {
            in_dim,
            layers: vec![
                ConvLayerSpec { kernel: 1, channels: narrow },
                ConvLayerSpec { kernel: 3, channels: narrow },
                ConvLayerSpec { kernel: 1, channels: in_dim },
            ],
            out_dim,
            loss,
        }
    }

    /// Deeper five-layer head with hidden width `d/2` (kernels 1, 3, 3, 3, 1).
    pub fn deep(in_dim: usize, out_dim: usize, loss: Loss) -> Self {
        let hidden = (in_dim / 2).max(1);
        let layers =
            [1, 3, 3, 3, 1].iter().map(|&kernel| ConvLayerSpec { kernel, channels: hidden }).collect();
        Self { in_dim, layers, out_dim, loss }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.in_dim == 0 || self.out_dim == 0 || self.layers.is_empty() {
            return Err(TrainError::Config("conv probe needs input, output and at least one layer".into()));
        }
        if self.layers.iter().any(|l| l.channels == 0 || l.kernel % 2 == 0) {
            return Err(TrainError::Config("conv layers need positive channels and odd kernels".into()));
        }
        validate_loss(self.loss, self.out_dim)
    }
}

/// Single 1x1 convolution `d -> classes` followed by bilinear upsampling.
///
/// `classes` counts background; two classes use one sigmoid channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSegDecoderConfig {
    pub in_dim: usize,
    pub classes: usize,
    pub smooth: f64,
}

impl LinearSegDecoderConfig {
    pub fn new(in_dim: usize, classes: usize) -> Self {
        Self { in_dim, classes, smooth: 1.0 }
    }

    pub fn channels(&self) -> usize {
        seg_channels(self.classes)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.in_dim == 0 || self.classes < 2 || self.classes > 256 {
            return Err(TrainError::Config("segmentation needs in_dim > 0 and 2..=256 classes".into()));
        }
        if !(self.smooth >= 0.0) {
            return Err(TrainError::Config("Dice smooth term must be non-negative".into()));
        }
        Ok(())
    }
}

pub(crate) fn seg_channels(classes: usize) -> usize {
    if classes == 2 {
        1
    } else {
        classes
    }
}

/// Conv classifier plus a linear segmentation head reading the first conv
/// layer's pre-activation. Joint loss: `cls + lambda * dice`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitaskConfig {
    pub classifier: ConvProbeConfig,
    pub seg_classes: usize,
    pub lambda: f64,
    pub smooth: f64,
}

impl MultitaskConfig {
    pub fn new(classifier: ConvProbeConfig, seg_classes: usize) -> Self {
        Self { classifier, seg_classes, lambda: 1.0, smooth: 1.0 }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.classifier.validate()?;
        if self.seg_classes < 2 || self.seg_classes > 256 {
            return Err(TrainError::Config("segmentation head needs 2..=256 classes".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        Ok(())
    }
}

/// Architecture descriptor stored alongside trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpProbeConfig),
    Conv(ConvProbeConfig),
    Seg(LinearSegDecoderConfig),
    Multitask(MultitaskConfig),
}

/// Optimizer and stopping schedule.
///
/// The plateau rule follows the usual reduce-on-plateau semantics: the rate is
/// multiplied by `plateau_factor` once more than `plateau_patience` epochs in a
/// row fail to improve the best validation score, and the counter restarts.
///
/// Fields missing from JSON take the classification defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub max_iterations: Option<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 500,
            max_iterations: None,
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            plateau_factor: 0.5,
            plateau_patience: 2,
            early_stop_patience: 10,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainSchedule {
    /// Segmentation recipe: batch 8, 5,000 iterations with early stopping.
    pub fn segmentation() -> Self {
        Self { batch_size: 8, max_iterations: Some(5000), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_iterations == Some(0) {
            return Err(TrainError::Config("batch size, epochs and iterations must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("learning rate must be positive, weight decay non-negative".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(TrainError::Config("plateau factor must lie in (0, 1]".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(TrainError::Config("early-stop patience must be positive".into()));
        }
        Ok(())
    }
}
