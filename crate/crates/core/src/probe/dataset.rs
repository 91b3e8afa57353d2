//! Turns manifest entries plus their embeddings into training samples.

use super::config::Architecture;
use super::model::{MaskTarget, Sample, Target};
use super::TrainError;
use crate::data::{DataError, DatasetManifest, EmbeddingBundle, LabelValue, ManifestEntry};
use crate::scalar::Scalar;

/// Which parts of an entry a probe consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSpec {
    pub patches: bool,
    pub target: bool,
    pub mask: bool,
}

impl InputSpec {
    pub fn for_architecture(arch: &Architecture) -> Self {
        match arch {
            Architecture::Mlp(_) => Self { patches: false, target: true, mask: false },
            Architecture::Conv(_) => Self { patches: true, target: true, mask: false },
            Architecture::Seg(_) => Self { patches: true, target: false, mask: true },
            Architecture::Multitask(_) => Self { patches: true, target: true, mask: true },
        }
    }
}

pub fn label_target(label: &LabelValue) -> Result<Target, DataError> {
    match label {
        LabelValue::Binary(b) => Ok(Target::Binary(*b == 1)),
        LabelValue::Multiclass(c) => Ok(Target::Class(*c)),
        LabelValue::Multilabel(bits) => Ok(Target::Multi(bits.iter().map(|&b| b == 1).collect())),
        other => Err(DataError::Invalid(format!("{:?} label cannot train a classifier", other.kind()))),
    }
}

/// Builds one sample per entry, in the order given.
pub fn build_samples<'a, S: Scalar>(
    manifest: &DatasetManifest,
    bundle: &EmbeddingBundle,
    entries: impl IntoIterator<Item = &'a ManifestEntry>,
    spec: InputSpec,
) -> Result<Vec<Sample<S>>, TrainError> {
    let mut out = Vec::new();
    for entry in entries {
        let record = bundle
            .get(&entry.image_id)
            .ok_or_else(|| DataError::MissingEmbeddings(vec![entry.image_id.clone()]))?;
        let mut sample = if spec.patches {
            let grid = record
                .patches
                .as_ref()
                .ok_or_else(|| DataError::Invalid(format!("{} has no patch embeddings", entry.image_id)))?;
            Sample::grid(grid.data.iter().map(|&v| S::of(v as f64)).collect(), grid.h, grid.w)
        } else {
            Sample { features: record.cls.iter().map(|&v| S::of(v as f64)).collect(), grid: None, target: None, mask: None }
        };
        if spec.target {
            sample.target = Some(label_target(&entry.label)?);
        }
        if spec.mask {
            let m = manifest.load_entry_mask(entry)?;
            sample.mask = Some(MaskTarget { h: m.height, w: m.width, data: m.data });
        }
        out.push(sample);
    }
    Ok(out)
}
