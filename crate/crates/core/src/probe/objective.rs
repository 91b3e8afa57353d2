//! Adapter exposing a probe's summed loss over fixed samples to `gradcheck`.

use super::model::{ProbeModel, Sample};
use crate::nn::Objective;

/// Loss of `model` summed over `samples`, dropout disabled.
pub struct ProbeObjective<'a, M> {
    pub model: &'a M,
    pub samples: &'a [Sample<f64>],
}

impl<M: ProbeModel<f64>> Objective for ProbeObjective<'_, M> {
    fn param_count(&self) -> usize {
        self.model.param_count()
    }

    fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.samples.iter().map(|s| self.model.accumulate(params, s, None, grad)).sum()
    }
}
