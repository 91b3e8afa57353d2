//! Subcommand implementations. Every failure maps onto a `PipelineError` so
//! the process exit status follows one table.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xrprobe::data::{load_bundle, DataError, DatasetManifest, Split};
use xrprobe::fairness::Axis;
use xrprobe::metrics::{self, MetricReport, ScoredBox};
use xrprobe::pca::{pca_fit, project_patch_grid, render_component_map, PcaModel};
use xrprobe::pipeline::{
    self, render_table, Dtype, FairnessRun, ProbeKind, ProbeRun, ProbeSpec, RunConfig, RunReport, Table, TableRow,
    TaskConfig,
};
use xrprobe::probe::TrainSchedule;
use xrprobe::reportprep::{self, process_report, AuditRecord, ShortReport};
use xrprobe::retrieval::RetrievalTask;
use xrprobe::PipelineError;

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn bad_input(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    DataError::Invalid(format!("{}: {e}", path.display())).into()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| bad_input(path, e))
}

fn read_config_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad_input(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    match out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Runs `config`, or only prints its plan when `dry_run` is set.
fn execute(mut config: RunConfig, dry_run: bool, jobs: Option<usize>) -> Result<Option<RunReport>, PipelineError> {
    if jobs.is_some() {
        config.jobs = jobs;
    }
    if dry_run {
        for line in pipeline::plan(&config)? {
            println!("{line}");
        }
        return Ok(None);
    }
    let report = pipeline::run(&config)?;
    print!("{}", report.table.text);
    Ok(Some(report))
}

pub fn run_config(path: &Path, dry_run: bool, jobs: Option<usize>) -> Result<(), PipelineError> {
    execute(RunConfig::load(path)?, dry_run, jobs).map(|_| ())
}

pub fn train(kind: ProbeKind, args: &crate::TrainArgs, jobs: Option<usize>) -> Result<(), PipelineError> {
    let schedule: Option<TrainSchedule> = args.schedule.as_deref().map(read_config_json).transpose()?;
    let task = TaskConfig::Probe(ProbeRun {
        bundle: args.bundle.clone(),
        manifest: args.manifest.clone(),
        probe: ProbeSpec::new(kind),
        schedule,
        fractions: args.fraction.clone(),
        dtype: Dtype::from(args.dtype),
        aggregate_groups: false,
        save_probes: true,
    });
    let config = RunConfig::new(args.out.clone(), (0..args.seeds).collect(), task);
    execute(config, args.dry_run, jobs).map(|_| ())
}

#[derive(Deserialize)]
struct TaskFile {
    query_ids: Vec<String>,
    candidate_ids: Vec<String>,
    #[serde(default)]
    k_values: Vec<usize>,
}

pub fn retrieve(bundle: &Path, manifest: &Path, task: &Path, k: &[usize], out: &Path) -> Result<(), PipelineError> {
    let file: TaskFile = read_config_json(task)?;
    let k_values = if k.is_empty() { file.k_values } else { k.to_vec() };
    if k_values.is_empty() {
        return Err(PipelineError::config("no k values given"));
    }
    let (bundle, manifest) = pipeline::run::load_inputs(bundle, manifest, false)?;
    let labels = manifest.entries.iter().map(|e| (e.image_id.clone(), e.label.clone())).collect();
    let task = RetrievalTask { query_ids: file.query_ids, candidate_ids: file.candidate_ids, k_values };
    let report = task.evaluate(&bundle, &labels)?;
    for (k, p) in &report.precision {
        println!("P@{k} = {p:.4}");
    }
    emit_json(&report, Some(out))
}

#[derive(Deserialize)]
struct TextRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    texts: Vec<String>,
}

pub fn metrics_nlg(pred: &Path, reference: &Path, out: Option<&Path>) -> Result<(), PipelineError> {
    let preds: Vec<TextRecord> = read_jsonl(pred)?;
    let refs: Vec<TextRecord> = read_jsonl(reference)?;
    let mut by_id: HashMap<String, Vec<metrics::nlg::Tokens>> = HashMap::new();
    for r in refs {
        let slot = by_id.entry(r.id).or_default();
        slot.extend(r.text.iter().chain(&r.texts).map(|t| metrics::tokenize(t)));
    }
    let mut candidates = Vec::with_capacity(preds.len());
    let mut references = Vec::with_capacity(preds.len());
    for p in &preds {
        let text = p.text.as_deref().ok_or_else(|| bad_input(pred, format!("{} has no text", p.id)))?;
        let r = by_id.get(&p.id).filter(|r| !r.is_empty());
        let r = r.ok_or_else(|| bad_input(reference, format!("no reference for {}", p.id)))?;
        candidates.push(metrics::tokenize(text));
        references.push(r.clone());
    }
    let n = candidates.len();
    let single = |name: &str, v: f64| {
        let mut r = MetricReport::from_seeds(name, vec![v]);
        r.n = n;
        r
    };
    let mut reports = Vec::new();
    for order in 1..=4 {
        reports.push(single(&format!("bleu{order}"), metrics::bleu(&candidates, &references, order)?));
    }
    reports.push(single("rouge_l", metrics::rouge_l_corpus(&candidates, &references)?));
    reports.push(single("cider", metrics::cider(&candidates, &references)?.corpus));
    emit_json(&reports, out)
}

#[derive(Deserialize)]
struct BoxRecord {
    id: String,
    boxes: Vec<ScoredBox<f64>>,
}

fn check_boxes(path: &Path, records: &[BoxRecord]) -> Result<(), PipelineError> {
    for r in records {
        if let Some(b) = r.boxes.iter().find(|b| !(b.x_min < b.x_max && b.y_min < b.y_max)) {
            return Err(bad_input(path, format!("{}: degenerate box {b:?}", r.id)));
        }
    }
    Ok(())
}

pub fn metrics_det(pred: &Path, truth: &Path, grounding: bool, out: Option<&Path>) -> Result<(), PipelineError> {
    let preds: Vec<BoxRecord> = read_jsonl(pred)?;
    let truths: Vec<BoxRecord> = read_jsonl(truth)?;
    check_boxes(pred, &preds)?;
    check_boxes(truth, &truths)?;
    let mut pred_by_id: HashMap<&str, &Vec<ScoredBox<f64>>> = HashMap::new();
    for p in &preds {
        if !truths.iter().any(|t| t.id == p.id) {
            return Err(bad_input(pred, format!("{} has no ground truth", p.id)));
        }
        pred_by_id.insert(&p.id, &p.boxes);
    }
    let n = truths.len();
    let single = |name: &str, v: f64| {
        let mut r = MetricReport::from_seeds(name, vec![v]);
        r.n = n;
        r
    };
    let reports = if grounding {
        let mut p = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for tr in &truths {
            let pb = pred_by_id.get(tr.id.as_str()).copied().cloned().unwrap_or_default();
            if pb.len() != 1 || tr.boxes.len() != 1 {
                return Err(bad_input(pred, format!("grounding needs exactly one box per side for {}", tr.id)));
            }
            p.push(pb[0].clone());
            t.push(tr.boxes[0].clone());
        }
        vec![
            single("grounding_accuracy", metrics::grounding_accuracy(&p, &t, 0.5)?),
            single("miou", metrics::mean_iou(&p, &t)?),
        ]
    } else {
        let p: Vec<Vec<ScoredBox<f64>>> =
            truths.iter().map(|t| pred_by_id.get(t.id.as_str()).map(|b| (*b).clone()).unwrap_or_default()).collect();
        let t: Vec<Vec<ScoredBox<f64>>> = truths.iter().map(|t| t.boxes.clone()).collect();
        vec![single("map50", metrics::map50(&p, &t)?), single("miou", metrics::detection_miou(&p, &t)?)]
    };
    emit_json(&reports, out)
}

#[derive(Deserialize)]
struct FairnessProbeFile {
    probe: ProbeSpec,
    #[serde(default)]
    schedule: Option<TrainSchedule>,
    #[serde(default)]
    dtype: Dtype,
    #[serde(default)]
    resamples: Option<usize>,
    #[serde(default)]
    alpha: Option<f64>,
}

pub fn fairness(
    axis: Axis,
    bundle: &Path,
    manifest: &Path,
    probe_cfg: &Path,
    seed: u64,
    out: &Path,
    jobs: Option<usize>,
) -> Result<(), PipelineError> {
    let cfg: FairnessProbeFile = read_config_json(probe_cfg)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fairness".into());
    let run_dir = out.with_file_name(format!("{stem}_run"));
    let task = TaskConfig::Fairness(FairnessRun {
        bundle: bundle.to_path_buf(),
        manifest: manifest.to_path_buf(),
        axis,
        probe: cfg.probe,
        schedule: cfg.schedule,
        resamples: cfg.resamples.unwrap_or(xrprobe::fairness::DEFAULT_RESAMPLES),
        alpha: cfg.alpha.unwrap_or(xrprobe::fairness::DEFAULT_ALPHA),
        dtype: cfg.dtype,
    });
    let report = execute(RunConfig::new(run_dir, vec![seed], task), false, jobs)?.expect("not a dry run");
    let fairness = report.fairness.expect("fairness run yields a fairness report");
    println!("{} of {} comparisons not significant", fairness.non_significant_count, fairness.comparisons.len());
    emit_json(&fairness, Some(out))
}

pub fn report_prep(input: &Path, out: &Path, audit: Option<&Path>, keywords: &[String]) -> Result<(), PipelineError> {
    let raw = reportprep::parse_raw_jsonl(&read_text(input)?)?;
    let keywords: Vec<&str> = keywords.iter().map(String::as_str).collect();
    let processed: Vec<(ShortReport, AuditRecord)> =
        raw.par_iter().map(|r| process_report(r, &keywords)).collect::<Result<_, _>>()?;
    let (short, audits): (Vec<ShortReport>, Vec<AuditRecord>) = processed.into_iter().unzip();
    write_text(out, &reportprep::to_jsonl(&short))?;
    let flagged: Vec<AuditRecord> = audits.into_iter().filter(|a| !a.is_clean()).collect();
    if let Some(path) = audit {
        write_text(path, &reportprep::to_jsonl(&flagged))?;
    }
    println!("{} reports, {} flagged", short.len(), flagged.len());
    Ok(())
}

pub fn pca(bundle: &Path, ids: &[String], k: usize, out: &Path, per_image: bool) -> Result<(), PipelineError> {
    let bundle = load_bundle(bundle)?;
    if !bundle.has_patches() {
        return Err(DataError::Invalid("bundle has no patch embeddings".into()).into());
    }
    let ids: Vec<String> =
        if ids.is_empty() { bundle.records().iter().map(|r| r.image_id.clone()).collect() } else { ids.to_vec() };
    let mut records = Vec::with_capacity(ids.len());
    for id in &ids {
        records.push(bundle.get(id).ok_or_else(|| DataError::MissingEmbeddings(vec![id.clone()]))?);
    }
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let k = k.min(3);
    let corpus = if per_image {
        None
    } else {
        let rows: Vec<&[f32]> = bundle.records().iter().flat_map(|r| r.patches.as_ref().expect("checked").patches()).collect();
        let model = pca_fit(&rows, k)?;
        emit_json(&model, Some(&out.join("pca_model.json")))?;
        Some(model)
    };
    let written: Vec<PathBuf> = records
        .par_iter()
        .map(|rec| -> Result<PathBuf, PipelineError> {
            let grid = rec.patches.as_ref().expect("checked");
            let own: PcaModel;
            let model = match &corpus {
                Some(m) => m,
                None => {
                    let rows: Vec<&[f32]> = grid.patches().collect();
                    own = pca_fit(&rows, k)?;
                    emit_json(&own, Some(&out.join(format!("{}.pca.json", rec.image_id))))?;
                    &own
                }
            };
            let path = out.join(format!("{}.ppm", rec.image_id));
            render_component_map(&project_patch_grid(grid, model, k), &path)?;
            Ok(path)
        })
        .collect::<Result<_, _>>()?;
    println!("wrote {} component maps to {}", written.len(), out.display());
    Ok(())
}

pub fn validate(bundle: &Path, manifest: Option<&Path>) -> Result<(), PipelineError> {
    let b = load_bundle(bundle)?;
    let grid = b.records().first().and_then(|r| r.patches.as_ref()).map(|g| format!(", patches {}x{}", g.h, g.w));
    println!("bundle: {} records, d = {}{}", b.len(), b.dim(), grid.unwrap_or_default());
    if let Some(m) = manifest {
        let m = DatasetManifest::load(m)?;
        m.validate()?;
        m.validate_against(&b)?;
        let count = |s| m.split(s).count();
        println!(
            "manifest: {} entries (train {}, val {}, test {}), {:?} labels",
            m.entries.len(),
            count(Split::Train),
            count(Split::Val),
            count(Split::Test),
            m.label_kind
        );
    }
    println!("ok: 0 warnings");
    Ok(())
}

pub fn table(reports: &[PathBuf], json: Option<&Path>, precision: usize, scale: f64) -> Result<(), PipelineError> {
    if reports.is_empty() {
        return Err(PipelineError::config("no reports given"));
    }
    let loaded: Vec<RunReport> = reports.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let mut columns: Vec<String> = Vec::new();
    for r in &loaded {
        for m in &r.reports {
            if !columns.contains(&m.metric) {
                columns.push(m.metric.clone());
            }
        }
    }
    let rows = loaded
        .iter()
        .map(|r| {
            let means: BTreeMap<&str, f64> = r.reports.iter().map(|m| (m.metric.as_str(), m.mean)).collect();
            TableRow { name: r.label.clone(), values: columns.iter().map(|c| means.get(c.as_str()).copied()).collect() }
        })
        .collect();
    let rendered = render_table(&Table { columns, rows }, precision, scale);
    print!("{}", rendered.text);
    if let Some(p) = json {
        emit_json(&rendered, Some(p))?;
    }
    Ok(())
}
