//! Minimal differentiable building blocks for probe heads.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod upsample;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradcheck, GradcheckReport, Objective, GRADCHECK_STEP};
pub use layers::{Conv2d, Dense, ParamLayout};
pub use upsample::Bilinear;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
