//! MLP classifier over CLS embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, MlpProbeConfig};
use super::model::{check_target, classification_loss, classification_score, output_scores, Prediction, ProbeModel, Sample};
use super::TrainError;
use crate::metrics::MetricError;
use crate::nn::layers::{relu_backward, relu_in_place};
use crate::nn::{Dense, ParamLayout};
use crate::rng::{keyed, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct MlpModel {
    config: MlpProbeConfig,
    layers: Vec<Dense>,
    layout: ParamLayout,
}

struct Trace<S> {
    /// Input to each layer (post-dropout for hidden layers).
    inputs: Vec<Vec<S>>,
    /// Post-ReLU, pre-dropout activation of each hidden layer.
    activations: Vec<Vec<S>>,
    /// Inverted-dropout multipliers of each hidden layer.
    keep: Vec<Option<Vec<S>>>,
    logits: Vec<S>,
}

impl MlpModel {
    pub fn new(config: MlpProbeConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut layout = ParamLayout::default();
        let mut dims = vec![config.in_dim];
        dims.extend(&config.hidden);
        dims.push(config.out_dim);
        let layers = dims.windows(2).map(|w| Dense::new(&mut layout, w[0], w[1])).collect();
        Ok(Self { config, layers, layout })
    }

    pub fn config(&self) -> &MlpProbeConfig {
        &self.config
    }

    fn forward<S: Scalar>(&self, params: &[S], x: &[S], mut dropout: Option<&mut ChaCha8Rng>) -> Trace<S> {
        let p = self.config.dropout;
        let scale = S::of(1.0 / (1.0 - p));
        let mut trace = Trace { inputs: Vec::new(), activations: Vec::new(), keep: Vec::new(), logits: Vec::new() };
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![S::zero(); layer.output];
            layer.forward(params, &current, &mut out);
            trace.inputs.push(current);
            if i == last {
                trace.logits = out;
                break;
            }
            relu_in_place(&mut out);
            let keep = match dropout.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    Some((0..out.len()).map(|_| if rng.random::<f64>() < p { S::zero() } else { scale }).collect::<Vec<S>>())
                }
                _ => None,
            };
            let next = match &keep {
                Some(k) => out.iter().zip(k).map(|(&a, &m)| a * m).collect(),
                None => out.clone(),
            };
            trace.activations.push(out);
            trace.keep.push(keep);
            current = next;
        }
        trace
    }
}

impl<S: Scalar> ProbeModel<S> for MlpModel {
    fn architecture(&self) -> Architecture {
        Architecture::Mlp(self.config.clone())
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn init(&self, seed: u64) -> Vec<S> {
        let mut params = vec![S::zero(); self.layout.len()];
        let mut rng = keyed(seed, stream::INIT, 0);
        self.layers.iter().for_each(|l| l.init(&mut params, &mut rng));
        params
    }

    fn check_sample(&self, sample: &Sample<S>) -> Result<(), TrainError> {
        if sample.grid.is_some() || sample.features.len() != self.config.in_dim {
            return Err(TrainError::Shape(format!(
                "MLP expects a {}-d vector, got {} values",
                self.config.in_dim,
                sample.features.len()
            )));
        }
        check_target(self.config.loss, self.config.out_dim, sample.target.as_ref())
    }

    fn accumulate(&self, params: &[S], sample: &Sample<S>, dropout: Option<&mut ChaCha8Rng>, grads: &mut [S]) -> f64 {
        let trace = self.forward(params, &sample.features, dropout);
        let mut delta = vec![S::zero(); self.config.out_dim];
        let target = sample.target.as_ref().expect("checked sample");
        let loss = classification_loss(self.config.loss, &trace.logits, target, &mut delta);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i == 0 {
                layer.backward(params, &trace.inputs[0], &delta, grads, None);
                break;
            }
            let mut dx = vec![S::zero(); layer.input];
            layer.backward(params, &trace.inputs[i], &delta, grads, Some(&mut dx));
            if let Some(keep) = &trace.keep[i - 1] {
                dx.iter_mut().zip(keep).for_each(|(d, &k)| *d *= k);
            }
            relu_backward(&trace.activations[i - 1], &mut dx);
            delta = dx;
        }
        loss
    }

    fn predict(&self, params: &[S], sample: &Sample<S>) -> Prediction {
        let trace = self.forward(params, &sample.features, None);
        Prediction { scores: output_scores(self.config.loss, &trace.logits), mask: None }
    }

    fn score(&self, predictions: &[Prediction], samples: &[Sample<S>]) -> Result<f64, MetricError> {
        classification_score(self.config.loss, predictions, samples)
    }
}
