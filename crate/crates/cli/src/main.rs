//! `xrprobe`: command-line entry point for the evaluation engine.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xrprobe::fairness::Axis;
use xrprobe::pipeline::{Dtype, ProbeKind};
use xrprobe::PipelineError;

#[derive(Parser)]
#[command(name = "xrprobe", version, about = "Frozen-embedding evaluation engine")]
struct Cli {
    /// Worker threads for independent jobs.
    #[arg(long, global = true, env = "XRPROBE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a JSON run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the job plan and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Cosine retrieval and Precision@k.
    Retrieve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// JSON with `query_ids` and `candidate_ids`.
        #[arg(long)]
        task: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe training.
    Probe {
        #[command(subcommand)]
        action: ProbeAction,
    },
    /// Linear segmentation decoder training.
    Segment(TrainArgs),
    /// Score externally produced predictions.
    Metrics {
        #[command(subcommand)]
        family: MetricsFamily,
    },
    /// Subgroup training matrix with bootstrap AUCs and Mann-Whitney tests.
    Fairness {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// JSON with `probe` (and optional `schedule`, `dtype`, `resamples`, `alpha`).
        #[arg(long)]
        probe_cfg: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report text preprocessing into short units.
    ReportPrep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = ["FINDINGS".to_string(), "REPORT".to_string()])]
        keywords: Vec<String>,
    },
    /// PCA component maps of patch embeddings.
    Pca {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Fit one PCA per image instead of one over the whole bundle.
        #[arg(long)]
        per_image: bool,
    },
    /// Check a bundle (and optionally a manifest against it).
    Validate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compare several run reports in one table.
    Table {
        reports: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        precision: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

#[derive(Subcommand)]
enum ProbeAction {
    Train {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        args: TrainArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    fraction: Vec<f64>,
    /// Number of seeds; runs use seeds 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON train schedule overriding the defaults.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    dtype: DtypeArg,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum MetricsFamily {
    /// BLEU-1..4, ROUGE-L and CIDEr from `{id, text}` JSONL files.
    Nlg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// mAP@50 and mIoU (or grounding accuracy) from `{id, boxes}` JSONL files.
    Det {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Score one predicted box per truth box instead of detections.
        #[arg(long)]
        grounding: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mlp,
    Conv,
    Seg,
    Multitask,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Sex,
    Age,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

impl From<KindArg> for ProbeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Mlp => ProbeKind::Mlp,
            KindArg::Conv => ProbeKind::Conv,
            KindArg::Seg => ProbeKind::Seg,
            KindArg::Multitask => ProbeKind::Multitask,
        }
    }
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    let jobs = cli.jobs;
    if let Some(j) = jobs {
        // ignore failure: the global pool may already exist
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match cli.command {
        Command::Run { config, dry_run } => commands::run_config(&config, dry_run, jobs),
        Command::Retrieve { bundle, manifest, task, k, out } => commands::retrieve(&bundle, &manifest, &task, &k, &out),
        Command::Probe { action: ProbeAction::Train { kind, args } } => commands::train(kind.into(), &args, jobs),
        Command::Segment(args) => commands::train(ProbeKind::Seg, &args, jobs),
        Command::Metrics { family: MetricsFamily::Nlg { pred, reference, out } } => {
            commands::metrics_nlg(&pred, &reference, out.as_deref())
        }
        Command::Metrics { family: MetricsFamily::Det { pred, truth, grounding, out } } => {
            commands::metrics_det(&pred, &truth, grounding, out.as_deref())
        }
        Command::Fairness { axis, bundle, manifest, probe_cfg, seed, out } => {
            let axis = match axis {
                AxisArg::Sex => Axis::Sex,
                AxisArg::Age => Axis::Age,
            };
            commands::fairness(axis, &bundle, &manifest, &probe_cfg, seed, &out, jobs)
        }
        Command::ReportPrep { input, out, audit, keywords } => {
            commands::report_prep(&input, &out, audit.as_deref(), &keywords)
        }
        Command::Pca { bundle, ids, k, out, per_image } => commands::pca(&bundle, &ids, k, &out, per_image),
        Command::Validate { bundle, manifest } => commands::validate(&bundle, manifest.as_deref()),
        Command::Table { reports, json, precision, scale } => commands::table(&reports, json.as_deref(), precision, scale),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
