//! Central finite-difference gradient checking on `f64` parameters.

use super::NnError;

/// A scalar objective with an analytic gradient.
pub trait Objective {
    fn param_count(&self) -> usize;
    /// Returns the loss and overwrites `grad` with its gradient.
    fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64;
    fn loss(&self, params: &[f64]) -> f64 {
        let mut scratch = vec![0.0; params.len()];
        self.loss_and_grad(params, &mut scratch)
    }
}

impl<F> Objective for (usize, F)
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn param_count(&self) -> usize {
        self.0
    }

    fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        (self.1)(params, grad)
    }
}

pub const GRADCHECK_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the analytic gradient with central differences of step `step`.
///
/// The per-parameter error is `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn gradcheck(objective: &impl Objective, params: &[f64], step: f64) -> Result<GradcheckReport, NnError> {
    if params.len() != objective.param_count() {
        return Err(NnError::Shape(format!("{} params for an objective of {}", params.len(), objective.param_count())));
    }
    let mut analytic = vec![0.0; params.len()];
    let base = objective.loss_and_grad(params, &mut analytic);
    if !base.is_finite() || analytic.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFinite("objective at the probe point".into()));
    }
    let mut probe = params.to_vec();
    let mut report = GradcheckReport { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let up = objective.loss(&probe);
        probe[i] = params[i] - step;
        let down = objective.loss(&probe);
        probe[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(NnError::NonFinite(format!("objective near parameter {i}")));
        }
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        if err > report.max_relative_error || i == 0 {
            report = GradcheckReport { max_relative_error: err, worst_index: i, analytic: a, numeric };
        }
    }
    Ok(report)
}
