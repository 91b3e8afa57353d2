//! Evaluation engine for frozen image embeddings: retrieval, probe training,
//! metrics, subgroup statistics, report preprocessing and patch PCA.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod data;
pub mod fairness;
pub mod metrics;
pub mod nn;
pub mod pca;
pub mod pipeline;
pub mod probe;
pub mod reportprep;
pub mod retrieval;
pub mod rng;
pub mod scalar;

pub use data::{DataError, DatasetManifest, EmbeddingBundle};
pub use metrics::{MetricError, MetricReport};
pub use pipeline::{PipelineError, RunConfig};
pub use probe::TrainError;
pub use scalar::Scalar;

pub type Sample32 = probe::Sample<f32>;
pub type Sample64 = probe::Sample<f64>;
pub type TrainedProbe32 = probe::TrainedProbe<f32>;
pub type TrainedProbe64 = probe::TrainedProbe<f64>;
pub type ScoredBox32 = metrics::ScoredBox<f32>;
pub type ScoredBox64 = metrics::ScoredBox<f64>;
pub type AdamState32 = nn::AdamState<f32>;
pub type AdamState64 = nn::AdamState<f64>;
