//! Mini-batch Adam training with reduce-on-plateau and early stopping, driven
//! by the validation score.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ConvProbeConfig, LinearSegDecoderConfig, MlpProbeConfig, MultitaskConfig, TrainSchedule};
use super::conv::ConvModel;
use super::mlp::MlpModel;
use super::model::{Prediction, ProbeModel, Sample};
use super::multitask::MultitaskModel;
use super::seg::SegModel;
use super::TrainError;
use crate::nn::{adam_step, AdamState};
use crate::rng::{keyed, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    MaxIterations,
}

/// A trained head: architecture, best-checkpoint parameters and the run history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe<S> {
    pub architecture: Architecture,
    pub params: Vec<S>,
    /// Zero-based epoch of the returned checkpoint.
    pub best_epoch: usize,
    pub best_score: f64,
    /// Validation score after every epoch.
    pub val_trace: Vec<f64>,
    /// Learning rate in effect during every epoch.
    pub lr_trace: Vec<f64>,
    pub epochs_run: usize,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

/// Trains `model` from its seeded initialisation.
///
/// Epoch `e` shuffles with stream `(seed, SHUFFLE, e)` and draws dropout masks
/// from `(seed, DROPOUT, e)`, so a run is a pure function of its inputs.
pub fn train<S: Scalar, M: ProbeModel<S>>(
    model: &M,
    train: &[Sample<S>],
    val: &[Sample<S>],
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainedProbe<S>, TrainError> {
    schedule.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    if val.is_empty() {
        return Err(TrainError::Config("empty validation set".into()));
    }
    for s in train.iter().chain(val) {
        model.check_sample(s)?;
    }

    let mut params = model.init(seed);
    let decay = model.layout().decay_mask().to_vec();
    let mut state = AdamState::new(params.len());
    let mut grads = vec![S::zero(); params.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut lr = schedule.learning_rate;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let (mut stale, mut plateau) = (0usize, 0usize);
    let mut val_trace = Vec::new();
    let mut lr_trace = Vec::new();
    let mut iterations = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..schedule.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut keyed(seed, stream::SHUFFLE, epoch as u64));
        let mut dropout = keyed(seed, stream::DROPOUT, epoch as u64);
        let mut capped = false;
        for batch in order.chunks(schedule.batch_size) {
            grads.iter_mut().for_each(|g| *g = S::zero());
            let mut loss = 0.0;
            for &i in batch {
                loss += model.accumulate(&params, &train[i], Some(&mut dropout), &mut grads);
            }
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Divergence { epoch, lr });
            }
            let scale = S::one() / S::of(batch.len() as f64);
            grads.iter_mut().for_each(|g| *g *= scale);
            adam_step(&mut params, &grads, &mut state, lr, schedule.weight_decay, Some(&decay), &schedule.adam);
            iterations += 1;
            if schedule.max_iterations == Some(iterations) {
                capped = true;
                break;
            }
        }

        let score = evaluate(model, &params, val)?;
        if score.is_nan() {
            return Err(TrainError::Divergence { epoch, lr });
        }
        val_trace.push(score);
        lr_trace.push(lr);
        log::debug!("epoch {epoch}: val {score:.6} lr {lr:e}");

        if score > best_score {
            best_score = score;
            best_params.copy_from_slice(&params);
            best_epoch = epoch;
            stale = 0;
            plateau = 0;
        } else {
            stale += 1;
            plateau += 1;
            if plateau > schedule.plateau_patience {
                lr *= schedule.plateau_factor;
                plateau = 0;
            }
        }
        if capped {
            stop_reason = StopReason::MaxIterations;
            break;
        }
        if stale >= schedule.early_stop_patience {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    Ok(TrainedProbe {
        architecture: model.architecture(),
        params: best_params,
        best_epoch,
        best_score,
        epochs_run: val_trace.len(),
        val_trace,
        lr_trace,
        iterations,
        stop_reason,
    })
}

/// Predictions for every sample, in order.
pub fn predict_all<S: Scalar, M: ProbeModel<S>>(model: &M, params: &[S], samples: &[Sample<S>]) -> Vec<Prediction> {
    samples.par_iter().map(|s| model.predict(params, s)).collect()
}

/// The model's validation score on `samples`.
pub fn evaluate<S: Scalar, M: ProbeModel<S>>(model: &M, params: &[S], samples: &[Sample<S>]) -> Result<f64, TrainError> {
    let predictions = predict_all(model, params, samples);
    Ok(model.score(&predictions, samples)?)
}

pub fn train_mlp_probe<S: Scalar>(
    train_set: &[Sample<S>],
    val: &[Sample<S>],
    cfg: MlpProbeConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainedProbe<S>, TrainError> {
    train(&MlpModel::new(cfg)?, train_set, val, schedule, seed)
}

pub fn train_conv_probe<S: Scalar>(
    train_set: &[Sample<S>],
    val: &[Sample<S>],
    cfg: ConvProbeConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainedProbe<S>, TrainError> {
    train(&ConvModel::new(cfg)?, train_set, val, schedule, seed)
}

pub fn train_linear_seg_decoder<S: Scalar>(
    train_set: &[Sample<S>],
    val: &[Sample<S>],
    cfg: LinearSegDecoderConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainedProbe<S>, TrainError> {
    train(&SegModel::new(cfg)?, train_set, val, schedule, seed)
}

pub fn train_multitask<S: Scalar>(
    train_set: &[Sample<S>],
    val: &[Sample<S>],
    cfg: MultitaskConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainedProbe<S>, TrainError> {
    train(&MultitaskModel::new(cfg)?, train_set, val, schedule, seed)
}
