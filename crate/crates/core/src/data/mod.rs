//! Embedding bundles, dataset manifests, mask rasters and split generation.

pub mod bundle;
pub mod manifest;
pub mod mask;
pub mod splits;

pub use bundle::{load_bundle, write_bundle, EmbeddingBundle, EmbeddingRecord, PatchGrid};
pub use manifest::{DatasetManifest, LabelKind, LabelValue, ManifestEntry, Sex, Split};
pub use mask::{load_mask, write_mask, Mask};
pub use splits::{fraction_subset, make_fraction_splits};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed bundle header: {0}")]
    MalformedHeader(String),
    #[error("record {record}: dimension {found}, expected {expected}")]
    DimensionMismatch { record: usize, expected: usize, found: usize },
    #[error("record {record}: duplicate image id {id:?}")]
    DuplicateId { record: usize, id: String },
    #[error("record {record}: {reason}")]
    Truncated { record: usize, reason: String },
    #[error("{} manifest ids have no embedding (first: {:?})", .0.len(), .0.first())]
    MissingEmbeddings(Vec<String>),
    #[error("class {class} has no training support at fraction {fraction}")]
    InsufficientSupport { class: usize, fraction: f64 },
    #[error("{0}")]
    Invalid(String),
}
