//! Versioned, fully serializable run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::{DatasetManifest, LabelKind};
use crate::fairness::{Axis, DEFAULT_ALPHA, DEFAULT_RESAMPLES};
use crate::probe::{
    Architecture, ConvProbeConfig, LinearSegDecoderConfig, Loss, MlpProbeConfig, MultitaskConfig, TrainSchedule,
};

pub const RUN_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Mlp,
    Conv,
    Seg,
    Multitask,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvPreset {
    /// 1x1, 3x3, 1x1 at width d/4, d/4, d.
    #[default]
    Bottleneck,
    /// Five layers (1, 3, 3, 3, 1) at width d/2.
    Deep,
}

/// Head choice; output widths and loss follow from the manifest's label kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    #[serde(default)]
    pub preset: ConvPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    /// Multitask segmentation weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<f64>,
    /// Multitask mask classes (background included); default 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_classes: Option<usize>,
}

impl ProbeSpec {
    pub fn new(kind: ProbeKind) -> Self {
        Self { kind, preset: ConvPreset::default(), hidden: None, dropout: None, lambda: None, smooth: None, seg_classes: None }
    }

    pub fn default_schedule(&self) -> TrainSchedule {
        match self.kind {
            ProbeKind::Seg => TrainSchedule::segmentation(),
            _ => TrainSchedule::default(),
        }
    }

    fn classifier_head(manifest: &DatasetManifest) -> Result<(usize, Loss), PipelineError> {
        match manifest.label_kind {
            LabelKind::Binary => Ok((1, Loss::BinaryCrossEntropy)),
            LabelKind::Multiclass => Ok((manifest.num_classes, Loss::CrossEntropy)),
            LabelKind::Multilabel => Ok((manifest.num_classes, Loss::BinaryCrossEntropy)),
            other => Err(PipelineError::config(format!("{other:?} labels cannot train a classifier"))),
        }
    }

    /// The concrete architecture for embeddings of width `dim`.
    pub fn architecture(&self, manifest: &DatasetManifest, dim: usize) -> Result<Architecture, PipelineError> {
        let conv = |out: usize, loss: Loss| match self.preset {
            ConvPreset::Bottleneck => ConvProbeConfig::bottleneck(dim, out, loss),
            ConvPreset::Deep => ConvProbeConfig::deep(dim, out, loss),
        };
        let arch = match self.kind {
            ProbeKind::Mlp => {
                let (out, loss) = Self::classifier_head(manifest)?;
                let mut cfg = MlpProbeConfig::new(dim, out, loss);
                if let Some(h) = &self.hidden {
                    cfg.hidden = h.clone();
                }
                if let Some(p) = self.dropout {
                    cfg.dropout = p;
                }
                Architecture::Mlp(cfg)
            }
            ProbeKind::Conv => {
                let (out, loss) = Self::classifier_head(manifest)?;
                Architecture::Conv(conv(out, loss))
            }
            ProbeKind::Seg => {
                if manifest.label_kind != LabelKind::Mask {
                    return Err(PipelineError::config("segmentation needs mask labels"));
                }
                let mut cfg = LinearSegDecoderConfig::new(dim, manifest.num_classes.max(2));
                if let Some(s) = self.smooth {
                    cfg.smooth = s;
                }
                Architecture::Seg(cfg)
            }
            ProbeKind::Multitask => {
                let (out, loss) = Self::classifier_head(manifest)?;
                let mut cfg = MultitaskConfig::new(conv(out, loss), self.seg_classes.unwrap_or(2));
                if let Some(l) = self.lambda {
                    cfg.lambda = l;
                }
                if let Some(s) = self.smooth {
                    cfg.smooth = s;
                }
                Architecture::Multitask(cfg)
            }
        };
        Ok(arch)
    }

    fn issues(&self, out: &mut Vec<String>) {
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                out.push(format!("probe.dropout {p} outside [0, 1)"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                out.push(format!("probe.lambda {l} must be finite and non-negative"));
            }
        }
        if let Some(h) = &self.hidden {
            if h.contains(&0) {
                out.push("probe.hidden widths must be positive".into());
            }
        }
        if self.seg_classes.is_some_and(|c| c < 2) {
            out.push("probe.seg_classes must be at least 2".into());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayOptions {
    /// Row label in tables; defaults to the bundle file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_precision")]
    pub precision: usize,
    /// Multiplier applied to values in the text table only.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_precision() -> usize {
    3
}

fn default_scale() -> f64 {
    1.0
}

impl Default for DisplayOptions {
    fn default() -> Self {
        Self { label: None, precision: default_precision(), scale: default_scale() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub bundle: PathBuf,
    pub manifest: PathBuf,
    pub probe: ProbeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<TrainSchedule>,
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub dtype: Dtype,
    /// Also score the mean prediction per `group_id` (binary tasks).
    #[serde(default)]
    pub aggregate_groups: bool,
    #[serde(default = "yes")]
    pub save_probes: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRun {
    pub bundle: PathBuf,
    pub manifest: PathBuf,
    pub axis: Axis,
    pub probe: ProbeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<TrainSchedule>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub dtype: Dtype,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveRun {
    pub bundle: PathBuf,
    pub manifest: PathBuf,
    pub query_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    pub k_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Probe(ProbeRun),
    Fairness(FairnessRun),
    Retrieve(RetrieveRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub display: DisplayOptions,
    pub task: TaskConfig,
    /// Directory relative paths resolve against (the config file's directory).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(output_dir: impl Into<PathBuf>, seeds: Vec<u64>, task: TaskConfig) -> Self {
        Self {
            version: RUN_CONFIG_VERSION,
            output_dir: output_dir.into(),
            seeds,
            jobs: None,
            display: DisplayOptions::default(),
            task,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        let joined = if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) };
        std::path::absolute(&joined).unwrap_or(joined)
    }

    /// A copy whose paths are all absolute, so it runs from any directory.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = self.resolve(&self.output_dir);
        match &mut c.task {
            TaskConfig::Probe(t) => {
                t.bundle = self.resolve(&t.bundle);
                t.manifest = self.resolve(&t.manifest);
            }
            TaskConfig::Fairness(t) => {
                t.bundle = self.resolve(&t.bundle);
                t.manifest = self.resolve(&t.manifest);
            }
            TaskConfig::Retrieve(t) => {
                t.bundle = self.resolve(&t.bundle);
                t.manifest = self.resolve(&t.manifest);
            }
        }
        c.base_dir = PathBuf::new();
        c
    }

    pub fn kind(&self) -> &'static str {
        match self.task {
            TaskConfig::Probe(_) => "probe",
            TaskConfig::Fairness(_) => "fairness",
            TaskConfig::Retrieve(_) => "retrieve",
        }
    }

    /// Every schema problem, collected before any work starts.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut issues = Vec::new();
        if self.version != RUN_CONFIG_VERSION {
            issues.push(format!("version {} unsupported (expected {RUN_CONFIG_VERSION})", self.version));
        }
        if self.output_dir.as_os_str().is_empty() {
            issues.push("output_dir is empty".into());
        }
        if self.jobs == Some(0) {
            issues.push("jobs must be positive".into());
        }
        if !(self.display.scale.is_finite() && self.display.scale > 0.0) {
            issues.push("display.scale must be positive".into());
        }
        let check_schedule = |s: &Option<TrainSchedule>, issues: &mut Vec<String>| {
            if let Some(Err(e)) = s.as_ref().map(TrainSchedule::validate) {
                issues.push(format!("schedule: {e}"));
            }
        };
        match &self.task {
            TaskConfig::Probe(t) => {
                if self.seeds.is_empty() {
                    issues.push("seed list is empty".into());
                }
                if t.fractions.is_empty() {
                    issues.push("fraction list is empty".into());
                }
                for f in &t.fractions {
                    if !(*f > 0.0 && *f <= 1.0) {
                        issues.push(format!("fraction {f} outside (0, 1]"));
                    }
                }
                t.probe.issues(&mut issues);
                check_schedule(&t.schedule, &mut issues);
            }
            TaskConfig::Fairness(t) => {
                if self.seeds.is_empty() {
                    issues.push("seed list is empty".into());
                }
                if t.resamples == 0 {
                    issues.push("resamples must be positive".into());
                }
                if !(t.alpha > 0.0 && t.alpha < 1.0) {
                    issues.push(format!("alpha {} outside (0, 1)", t.alpha));
                }
                if matches!(t.probe.kind, ProbeKind::Seg) {
                    issues.push("fairness needs a classification probe".into());
                }
                t.probe.issues(&mut issues);
                check_schedule(&t.schedule, &mut issues);
            }
            TaskConfig::Retrieve(t) => {
                if t.query_ids.is_empty() || t.candidate_ids.is_empty() {
                    issues.push("query and candidate lists must be non-empty".into());
                }
                if t.k_values.is_empty() || t.k_values.contains(&0) {
                    issues.push("k values must be a non-empty list of positive integers".into());
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(issues))
        }
    }
}
