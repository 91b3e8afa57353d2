//! Executes a validated [`RunConfig`] and writes its artifacts.
//!
//! Output directory layout: `run_config.json` (the config with absolute
//! paths), `report.json`, `table.txt`, and `probes/*.xrp` for probe runs.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Dtype, FairnessRun, ProbeRun, RetrieveRun, RunConfig, TaskConfig};
use super::table::{render_table, RenderedTable, Table, TableRow};
use super::PipelineError;
use crate::data::{load_bundle, DataError, DatasetManifest, EmbeddingBundle, ManifestEntry, Split};
use crate::fairness::{self, CellResult, FairnessReport, Group};
use crate::metrics::{self, MetricReport};
use crate::probe::{
    build_samples, classification_score, predict_all, save_probe, train, AnyModel, Architecture, InputSpec, Loss,
    Prediction, Sample, Target, TrainSchedule,
};
use crate::retrieval::{RetrievalReport, RetrievalTask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fraction: f64,
    pub seed: u64,
    pub train_size: usize,
    pub metrics: BTreeMap<String, f64>,
    pub best_epoch: usize,
    pub best_val_score: f64,
    pub epochs_run: usize,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRun {
    pub fraction: f64,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub kind: String,
    pub label: String,
    pub reports: Vec<MetricReport>,
    #[serde(default)]
    pub runs: Vec<RunRecord>,
    #[serde(default)]
    pub skipped: Vec<SkippedRun>,
    pub table: RenderedTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness: Option<FairnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
}

/// Human-readable job list; validates the config but touches no data.
pub fn plan(config: &RunConfig) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    let c = config.resolved();
    let mut lines = vec![format!("{} run -> {}", c.kind(), c.output_dir.display())];
    match &c.task {
        TaskConfig::Probe(t) => {
            for &f in &t.fractions {
                for &s in &c.seeds {
                    lines.push(format!("train {:?} probe: fraction {f}, seed {s}", t.probe.kind));
                }
            }
        }
        TaskConfig::Fairness(t) => {
            let spec = fairness::SubgroupSpec::new(t.axis);
            for g in spec.train_groups() {
                lines.push(format!("train {:?} probe on {g:?}; evaluate on {:?}", t.probe.kind, spec.eval_groups()));
            }
            lines.push(format!("{} bootstrap resamples per cell, alpha {}", t.resamples, t.alpha));
        }
        TaskConfig::Retrieve(t) => {
            lines.push(format!(
                "rank {} candidates for {} queries; k = {:?}",
                t.candidate_ids.len(),
                t.query_ids.len(),
                t.k_values
            ));
        }
    }
    Ok(lines)
}

/// Validates, runs and archives `config`; returns the written report.
pub fn run(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let c = config.resolved();
    std::fs::create_dir_all(&c.output_dir).map_err(|e| PipelineError::io(&c.output_dir, e))?;
    write(&c.output_dir.join("run_config.json"), c.to_json().as_bytes())?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = c.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| PipelineError::config(format!("worker pool: {e}")))?;
    let report = pool.install(|| match &c.task {
        TaskConfig::Probe(t) => run_probe(&c, t),
        TaskConfig::Fairness(t) => run_fairness(&c, t),
        TaskConfig::Retrieve(t) => run_retrieve(&c, t),
    })?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&c.output_dir.join("report.json"), json.as_bytes())?;
    write(&c.output_dir.join("table.txt"), report.table.text.as_bytes())?;
    Ok(report)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn label_for(c: &RunConfig, bundle: &Path) -> String {
    c.display
        .label
        .clone()
        .unwrap_or_else(|| bundle.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

pub fn load_inputs(bundle: &Path, manifest: &Path, need_test: bool) -> Result<(EmbeddingBundle, DatasetManifest), PipelineError> {
    let bundle = load_bundle(bundle)?;
    let manifest = DatasetManifest::load(manifest)?;
    manifest.validate()?;
    manifest.validate_against(&bundle)?;
    if need_test {
        manifest.require_test()?;
    }
    Ok((bundle, manifest))
}

fn metric_name(loss: Loss, out_dim: usize) -> &'static str {
    match (loss, out_dim) {
        (Loss::CrossEntropy, _) => "mcc",
        (Loss::BinaryCrossEntropy, 1) => "auroc",
        (Loss::BinaryCrossEntropy, _) => "mean_auroc",
    }
}

fn seg_metrics<S: Scalar>(
    classes: usize,
    smooth: f64,
    preds: &[Prediction],
    test: &[Sample<S>],
    out: &mut BTreeMap<String, f64>,
) -> Result<(), PipelineError> {
    let mut per_case = Vec::with_capacity(test.len());
    let mut positive = Vec::with_capacity(test.len());
    for (p, s) in preds.iter().zip(test) {
        let truth = s.mask.as_ref().ok_or_else(|| PipelineError::config("test sample lacks a mask"))?;
        let pred = p.mask.as_ref().ok_or_else(|| PipelineError::config("prediction lacks a mask"))?;
        per_case.push(metrics::mean_foreground_dsc(pred, &truth.data, classes, smooth)?);
        positive.push(truth.data.iter().any(|&v| v != 0));
    }
    out.insert("dsc".into(), per_case.iter().sum::<f64>() / per_case.len() as f64);
    if positive.iter().any(|&p| p) {
        out.insert("dice_pos".into(), metrics::dice_pos(&per_case, &positive)?);
    }
    Ok(())
}

/// AUROC of per-group mean scores; the group label is its first member's.
fn group_auroc<S: Scalar>(preds: &[Prediction], test: &[Sample<S>], entries: &[&ManifestEntry]) -> Option<f64> {
    let mut groups = Vec::new();
    let mut scores = Vec::new();
    let mut labels: BTreeMap<String, bool> = BTreeMap::new();
    for ((p, s), e) in preds.iter().zip(test).zip(entries) {
        let (Some(g), Some(Target::Binary(b))) = (&e.group_id, &s.target) else { continue };
        groups.push(g.as_str());
        scores.push(p.scores[0]);
        labels.entry(g.clone()).or_insert(*b);
    }
    if groups.is_empty() {
        return None;
    }
    let means = metrics::aggregate_per_group(&scores, groups).ok()?;
    let s: Vec<f64> = means.values().copied().collect();
    let l: Vec<bool> = means.keys().map(|g| labels[g]).collect();
    metrics::auroc(&s, &l).ok()
}

fn test_metrics<S: Scalar>(
    arch: &Architecture,
    preds: &[Prediction],
    test: &[Sample<S>],
    group_entries: Option<&[&ManifestEntry]>,
) -> Result<BTreeMap<String, f64>, PipelineError> {
    let mut out = BTreeMap::new();
    let cls = match arch {
        Architecture::Mlp(c) => Some((c.loss, c.out_dim)),
        Architecture::Conv(c) => Some((c.loss, c.out_dim)),
        Architecture::Multitask(c) => Some((c.classifier.loss, c.classifier.out_dim)),
        Architecture::Seg(_) => None,
    };
    if let Some((loss, out_dim)) = cls {
        out.insert(metric_name(loss, out_dim).to_string(), classification_score(loss, preds, test)?);
        if let (Some(entries), Loss::BinaryCrossEntropy, 1) = (group_entries, loss, out_dim) {
            if let Some(v) = group_auroc(preds, test, entries) {
                out.insert("auroc_group".into(), v);
            }
        }
    }
    match arch {
        Architecture::Seg(c) => seg_metrics(c.classes, c.smooth, preds, test, &mut out)?,
        Architecture::Multitask(c) => seg_metrics(c.seg_classes, c.smooth, preds, test, &mut out)?,
        _ => {}
    }
    Ok(out)
}

enum JobOutcome {
    Done(RunRecord),
    Skipped(SkippedRun),
}

fn run_probe(c: &RunConfig, t: &ProbeRun) -> Result<RunReport, PipelineError> {
    let (bundle, manifest) = load_inputs(&t.bundle, &t.manifest, true)?;
    let arch = t.probe.architecture(&manifest, bundle.dim())?;
    let schedule = t.schedule.clone().unwrap_or_else(|| t.probe.default_schedule());
    let outcomes = match t.dtype {
        Dtype::F32 => probe_jobs::<f32>(c, t, &bundle, &manifest, &arch, &schedule)?,
        Dtype::F64 => probe_jobs::<f64>(c, t, &bundle, &manifest, &arch, &schedule)?,
    };
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            JobOutcome::Done(r) => runs.push(r),
            JobOutcome::Skipped(s) => skipped.push(s),
        }
    }

    let mut reports = Vec::new();
    for &f in &t.fractions {
        let at: Vec<&RunRecord> = runs.iter().filter(|r| r.fraction == f).collect();
        let names: std::collections::BTreeSet<&String> = at.iter().flat_map(|r| r.metrics.keys()).collect();
        for name in names {
            let values: Vec<f64> = at.iter().filter_map(|r| r.metrics.get(name).copied()).collect();
            reports.push(MetricReport::from_seeds(format!("{name}@{f}"), values));
        }
    }
    let label = label_for(c, &t.bundle);
    let table = report_table(&label, &reports, c);
    Ok(RunReport {
        version: super::RUN_CONFIG_VERSION,
        kind: c.kind().into(),
        label,
        reports,
        runs,
        skipped,
        table,
        fairness: None,
        retrieval: None,
    })
}

fn report_table(label: &str, reports: &[MetricReport], c: &RunConfig) -> RenderedTable {
    let table = Table {
        columns: reports.iter().map(|r| r.metric.clone()).collect(),
        rows: vec![TableRow { name: label.to_string(), values: reports.iter().map(|r| Some(r.mean)).collect() }],
    };
    render_table(&table, c.display.precision, c.display.scale)
}

fn probe_jobs<S: Scalar>(
    c: &RunConfig,
    t: &ProbeRun,
    bundle: &EmbeddingBundle,
    manifest: &DatasetManifest,
    arch: &Architecture,
    schedule: &TrainSchedule,
) -> Result<Vec<JobOutcome>, PipelineError> {
    let spec = InputSpec::for_architecture(arch);
    let model = AnyModel::from_architecture(arch)?;
    let train_entries: Vec<&ManifestEntry> = manifest.split(Split::Train).collect();
    let train_all = build_samples::<S>(manifest, bundle, train_entries.iter().copied(), spec)?;
    let index: HashMap<&str, usize> = train_entries.iter().enumerate().map(|(i, e)| (e.image_id.as_str(), i)).collect();
    let val = build_samples::<S>(manifest, bundle, manifest.split(Split::Val), spec)?;
    let test_entries: Vec<&ManifestEntry> = manifest.split(Split::Test).collect();
    let test = build_samples::<S>(manifest, bundle, test_entries.iter().copied(), spec)?;
    let group_entries = t.aggregate_groups.then_some(test_entries.as_slice());

    let probe_dir = c.output_dir.join("probes");
    if t.save_probes {
        std::fs::create_dir_all(&probe_dir).map_err(|e| PipelineError::io(&probe_dir, e))?;
    }
    let jobs: Vec<(f64, u64)> = t.fractions.iter().flat_map(|&f| c.seeds.iter().map(move |&s| (f, s))).collect();
    jobs.par_iter()
        .map(|&(fraction, seed)| -> Result<JobOutcome, PipelineError> {
            let ids = match crate::data::fraction_subset(manifest, fraction, seed) {
                Ok(ids) => ids,
                Err(e @ DataError::InsufficientSupport { .. }) => {
                    log::warn!("skipping fraction {fraction} seed {seed}: {e}");
                    return Ok(JobOutcome::Skipped(SkippedRun { fraction, seed, reason: e.to_string() }));
                }
                Err(e) => return Err(e.into()),
            };
            let train_set: Vec<Sample<S>> = ids.iter().map(|id| train_all[index[id.as_str()]].clone()).collect();
            log::info!("fraction {fraction} seed {seed}: training on {} samples", train_set.len());
            let trained = train(&model, &train_set, &val, schedule, seed)?;
            let preds = predict_all(&model, &trained.params, &test);
            let metrics = test_metrics(arch, &preds, &test, group_entries)?;
            let probe_file = if t.save_probes {
                let name = format!("{:?}_f{fraction}_s{seed}.xrp", t.probe.kind).to_lowercase();
                save_probe(probe_dir.join(&name), &trained)?;
                Some(PathBuf::from("probes").join(name).display().to_string())
            } else {
                None
            };
            Ok(JobOutcome::Done(RunRecord {
                fraction,
                seed,
                train_size: train_set.len(),
                metrics,
                best_epoch: trained.best_epoch,
                best_val_score: trained.best_score,
                epochs_run: trained.epochs_run,
                iterations: trained.iterations,
                probe_file,
            }))
        })
        .collect()
}

fn run_fairness(c: &RunConfig, t: &FairnessRun) -> Result<RunReport, PipelineError> {
    let (bundle, manifest) = load_inputs(&t.bundle, &t.manifest, true)?;
    let arch = t.probe.architecture(&manifest, bundle.dim())?;
    let schedule = t.schedule.clone().unwrap_or_else(|| t.probe.default_schedule());
    let cells = match t.dtype {
        Dtype::F32 => fairness_cells::<f32>(c, t, &bundle, &manifest, &arch, &schedule)?,
        Dtype::F64 => fairness_cells::<f64>(c, t, &bundle, &manifest, &arch, &schedule)?,
    };
    let (cells, skipped) = cells;
    let report = fairness::fairness_report(t.axis, cells, skipped, t.alpha)?;

    let reports: Vec<MetricReport> = report
        .cells
        .iter()
        .map(|cell| {
            let mut r = MetricReport::from_seeds(
                format!("auroc[{:?}->{:?}]", cell.train_group, cell.eval_group).to_lowercase(),
                vec![cell.auc],
            );
            r.bootstrap = Some(cell.bootstrap.values.clone());
            r
        })
        .collect();
    let spec = fairness::SubgroupSpec::new(t.axis);
    let eval_groups = spec.eval_groups();
    let table = Table {
        columns: eval_groups.iter().map(|g| format!("eval {g:?}").to_lowercase()).collect(),
        rows: spec
            .train_groups()
            .iter()
            .map(|tg| TableRow {
                name: format!("train {tg:?}").to_lowercase(),
                values: eval_groups
                    .iter()
                    .map(|eg| {
                        report
                            .cells
                            .iter()
                            .find(|c| c.train_group == *tg && c.eval_group == *eg)
                            .map(|c| c.bootstrap.median)
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(RunReport {
        version: super::RUN_CONFIG_VERSION,
        kind: c.kind().into(),
        label: label_for(c, &t.bundle),
        reports,
        runs: Vec::new(),
        skipped: Vec::new(),
        table: render_table(&table, c.display.precision, c.display.scale),
        fairness: Some(report),
        retrieval: None,
    })
}

type CellOutput = (Vec<CellResult>, Vec<fairness::SkippedCell>);

fn fairness_cells<S: Scalar>(
    c: &RunConfig,
    t: &FairnessRun,
    bundle: &EmbeddingBundle,
    manifest: &DatasetManifest,
    arch: &Architecture,
    schedule: &TrainSchedule,
) -> Result<CellOutput, PipelineError> {
    let columns = match arch {
        Architecture::Mlp(m) if m.loss == Loss::BinaryCrossEntropy => m.out_dim,
        Architecture::Conv(m) if m.loss == Loss::BinaryCrossEntropy => m.out_dim,
        Architecture::Multitask(m) if m.classifier.loss == Loss::BinaryCrossEntropy => m.classifier.out_dim,
        _ => return Err(PipelineError::config("fairness needs a binary or multi-label classifier")),
    };
    let seed = c.seeds[0];
    let matrix = fairness::subgroup_matrix(manifest, t.axis);
    let spec = InputSpec::for_architecture(arch);
    let model = AnyModel::from_architecture(arch)?;
    let by_id: HashMap<&str, &ManifestEntry> = manifest.entries.iter().map(|e| (e.image_id.as_str(), e)).collect();
    let samples = |ids: &[String]| build_samples::<S>(manifest, bundle, ids.iter().map(|id| by_id[id.as_str()]), spec);

    // cells sharing a train group share one trained model
    let mut by_train: BTreeMap<Group, Vec<&fairness::SubgroupCell>> = BTreeMap::new();
    for cell in &matrix.cells {
        by_train.entry(cell.train_group).or_default().push(cell);
    }
    let groups: Vec<(Group, Vec<&fairness::SubgroupCell>)> = by_train.into_iter().collect();
    let results: Vec<Vec<CellResult>> = groups
        .par_iter()
        .map(|(group, cells)| -> Result<Vec<CellResult>, PipelineError> {
            let train_set = samples(&cells[0].train_ids)?;
            let val = samples(&cells[0].val_ids)?;
            log::info!("fairness: training on {group:?} ({} samples)", train_set.len());
            let trained = train(&model, &train_set, &val, schedule, seed)?;
            let mut out = Vec::new();
            for cell in cells {
                let test = samples(&cell.test_ids)?;
                let preds = predict_all(&model, &trained.params, &test);
                let scores: Vec<f64> = preds.iter().flat_map(|p| p.scores.iter().copied()).collect();
                let mut labels = Vec::with_capacity(scores.len());
                for s in &test {
                    match s.target.as_ref() {
                        Some(Target::Binary(b)) => labels.push(*b),
                        Some(Target::Multi(bits)) => labels.extend_from_slice(bits),
                        Some(Target::Class(k)) => labels.push(*k == 1),
                        None => return Err(PipelineError::config("test sample lacks a label")),
                    }
                }
                let auc = metrics::mean_auroc(&scores, &labels, columns)?;
                let bootstrap = fairness::bootstrap_mean_auc(&scores, &labels, columns, t.resamples, seed)?;
                out.push(CellResult { train_group: cell.train_group, eval_group: cell.eval_group, auc, bootstrap });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok((results.into_iter().flatten().collect(), matrix.skipped))
}

fn run_retrieve(c: &RunConfig, t: &RetrieveRun) -> Result<RunReport, PipelineError> {
    let (bundle, manifest) = load_inputs(&t.bundle, &t.manifest, false)?;
    let labels = manifest.entries.iter().map(|e| (e.image_id.clone(), e.label.clone())).collect();
    let task = RetrievalTask {
        query_ids: t.query_ids.clone(),
        candidate_ids: t.candidate_ids.clone(),
        k_values: t.k_values.clone(),
    };
    let result = task.evaluate(&bundle, &labels)?;
    let reports: Vec<MetricReport> = result
        .precision
        .iter()
        .map(|(k, &p)| {
            let mut r = MetricReport::from_seeds(format!("p@{k}"), vec![p]);
            r.n = result.queries;
            r
        })
        .collect();
    let label = label_for(c, &t.bundle);
    let table = report_table(&label, &reports, c);
    Ok(RunReport {
        version: super::RUN_CONFIG_VERSION,
        kind: c.kind().into(),
        label,
        reports,
        runs: Vec::new(),
        skipped: Vec::new(),
        table,
        fairness: None,
        retrieval: Some(result),
    })
}
