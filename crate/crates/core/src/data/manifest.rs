//! JSON dataset manifests.
//!
//! ```json
//! {
//!   "version": 1,
//!   "label_kind": "binary",
//!   "num_classes": 2,
//!   "entries": [
//!     {"image_id": "p1", "label": {"binary": 1}, "split": "train",
//!      "sex": "F", "age_years": 61.0, "group_id": "study-9", "mask": "masks/p1.pgm"}
//!   ]
//! }
//! ```
//!
//! `label` is externally tagged by kind. `mask` is an optional auxiliary
//! raster used by multitask training alongside a classification label. Mask
//! paths are resolved relative to the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bundle::EmbeddingBundle;
use super::mask::{load_mask, Mask};
use super::DataError;
use crate::metrics::detection::ScoredBox;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    Multiclass,
    Multilabel,
    Mask,
    Boxes,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelValue {
    Binary(u8),
    Multiclass(usize),
    Multilabel(Vec<u8>),
    Mask(String),
    Boxes(Vec<ScoredBox<f64>>),
    Text(String),
}

impl LabelValue {
    pub fn kind(&self) -> LabelKind {
        match self {
            Self::Binary(_) => LabelKind::Binary,
            Self::Multiclass(_) => LabelKind::Multiclass,
            Self::Multilabel(_) => LabelKind::Multilabel,
            Self::Mask(_) => LabelKind::Mask,
            Self::Boxes(_) => LabelKind::Boxes,
            Self::Text(_) => LabelKind::Text,
        }
    }

    /// Classes this label is positive for (classification kinds only).
    pub fn positive_classes(&self) -> Vec<usize> {
        match self {
            Self::Binary(v) => vec![*v as usize],
            Self::Multiclass(c) => vec![*c],
            Self::Multilabel(bits) => bits.iter().enumerate().filter(|(_, &b)| b != 0).map(|(i, _)| i).collect(),
            _ => Vec::new(),
        }
    }

    /// Stratum used for limited-data sampling: the class for binary and
    /// multiclass labels, the first positive class (or `C` for none) for
    /// multilabel, a single stratum otherwise.
    pub fn stratum(&self, num_classes: usize) -> usize {
        match self {
            Self::Binary(v) => *v as usize,
            Self::Multiclass(c) => *c,
            Self::Multilabel(_) => self.positive_classes().first().copied().unwrap_or(num_classes),
            _ => 0,
        }
    }

    fn validate(&self, kind: LabelKind, num_classes: usize, entry: usize) -> Result<(), DataError> {
        let bad = |m: String| DataError::Invalid(format!("entry {entry}: {m}"));
        if self.kind() != kind {
            return Err(bad(format!("label kind {:?} does not match manifest kind {kind:?}", self.kind())));
        }
        match self {
            Self::Binary(v) if *v > 1 => Err(bad(format!("binary label {v} not in {{0,1}}"))),
            Self::Multiclass(c) if *c >= num_classes => Err(bad(format!("class {c} >= {num_classes}"))),
            Self::Multilabel(bits) if bits.len() != num_classes || bits.iter().any(|&b| b > 1) => {
                Err(bad(format!("multilabel vector must be {num_classes} bits")))
            }
            Self::Boxes(boxes) => {
                for b in boxes {
                    if !(b.x_min < b.x_max && b.y_min < b.y_max) {
                        return Err(bad(format!("degenerate box {b:?}")));
                    }
                    if num_classes > 0 && b.class >= num_classes {
                        return Err(bad(format!("box class {} >= {num_classes}", b.class)));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub label: LabelValue,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_years: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub label_kind: LabelKind,
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(label_kind: LabelKind, num_classes: usize, entries: Vec<ManifestEntry>) -> Self {
        Self { version: MANIFEST_VERSION, label_kind, num_classes, entries, base_dir: PathBuf::new() }
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let m: Self = serde_json::from_str(text).map_err(|e| DataError::Invalid(format!("manifest JSON: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
        let mut m = Self::from_json(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
    }

    /// Checks the per-entry label invariants and id uniqueness.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.version != MANIFEST_VERSION {
            return Err(DataError::Invalid(format!("unsupported manifest version {}", self.version)));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.image_id.as_str()) {
                return Err(DataError::DuplicateId { record: i, id: e.image_id.clone() });
            }
            e.label.validate(self.label_kind, self.num_classes, i)?;
            if let Some(age) = e.age_years {
                if !(age >= 0.0 && age.is_finite()) {
                    return Err(DataError::Invalid(format!("entry {i}: age {age} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    /// Checks every id resolves in `bundle` and returns the ids that do not.
    pub fn validate_against(&self, bundle: &EmbeddingBundle) -> Result<(), DataError> {
        let missing: Vec<String> =
            self.entries.iter().filter(|e| bundle.get(&e.image_id).is_none()).map(|e| e.image_id.clone()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(DataError::MissingEmbeddings(missing))
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn require_test(&self) -> Result<(), DataError> {
        if self.split(Split::Test).next().is_none() {
            return Err(DataError::Invalid("manifest has no test entries".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Loads the raster referenced by a `mask` label or the auxiliary `mask` field.
    pub fn load_entry_mask(&self, entry: &ManifestEntry) -> Result<Mask, DataError> {
        let rel = match (&entry.label, &entry.mask) {
            (LabelValue::Mask(p), _) => p,
            (_, Some(p)) => p,
            _ => return Err(DataError::Invalid(format!("entry {} has no mask", entry.image_id))),
        };
        let mask = load_mask(self.resolve(rel))?;
        let classes = self.num_classes.max(2);
        if mask.max_class() as usize >= classes {
            return Err(DataError::Invalid(format!(
                "mask for {} has class {} >= {classes}",
                entry.image_id,
                mask.max_class()
            )));
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "version": 1, "label_kind": "binary", "num_classes": 2,
        "entries": [
            {"image_id": "a", "label": {"binary": 1}, "split": "train", "sex": "F", "age_years": 61.0},
            {"image_id": "b", "label": {"binary": 0}, "split": "test", "group_id": "s1"}
        ]
    }"#;

    #[test]
    fn parses_documented_schema() {
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].sex, Some(Sex::F));
        assert_eq!(m.entries[1].group_id.as_deref(), Some("s1"));
        assert!(m.require_test().is_ok());
    }

    #[test]
    fn rejects_bad_labels() {
        let bad = SAMPLE.replace(r#"{"binary": 0}"#, r#"{"binary": 3}"#);
        assert!(DatasetManifest::from_json(&bad).is_err());
        let wrong_kind = SAMPLE.replace(r#"{"binary": 0}"#, r#"{"multiclass": 0}"#);
        assert!(DatasetManifest::from_json(&wrong_kind).is_err());
    }

    #[test]
    fn rejects_degenerate_boxes() {
        let text = r#"{"version": 1, "label_kind": "boxes", "num_classes": 1, "entries": [
            {"image_id": "a", "split": "test", "label": {"boxes": [
                {"x_min": 5, "y_min": 0, "x_max": 5, "y_max": 3, "class": 0}]}}]}"#;
        assert!(DatasetManifest::from_json(text).is_err());
    }

    #[test]
    fn missing_embeddings_are_listed() {
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        let bundle = EmbeddingBundle::default();
        match m.validate_against(&bundle) {
            Err(DataError::MissingEmbeddings(ids)) => assert_eq!(ids, vec!["a", "b"]),
            other => panic!("{other:?}"),
        }
    }
}
