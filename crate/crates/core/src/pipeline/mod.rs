//! Config-driven runs: validation, job planning, execution, archiving and tables.

pub mod config;
pub mod run;
pub mod table;

pub use config::{
    ConvPreset, DisplayOptions, Dtype, FairnessRun, ProbeKind, ProbeRun, ProbeSpec, RetrieveRun, RunConfig, TaskConfig,
    RUN_CONFIG_VERSION,
};
pub use run::{plan, run, RunRecord, RunReport, SkippedRun};
pub use table::{column_marks, render_table, Mark, RenderedTable, Table, TableRow};

use std::path::Path;

use thiserror::Error;

use crate::data::DataError;
use crate::fairness::FairnessError;
use crate::metrics::MetricError;
use crate::pca::PcaError;
use crate::probe::TrainError;
use crate::reportprep::ReportError;
use crate::retrieval::RetrievalError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl PipelineError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(vec![msg.into()])
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Data(DataError::Io { path: path.display().to_string(), source })
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Data(_) | Self::Report(_) => EXIT_DATA,
            Self::Train(e) => match e {
                TrainError::Config(_) => EXIT_CONFIG,
                TrainError::Shape(_) | TrainError::Data(_) => EXIT_DATA,
                TrainError::Divergence { .. } | TrainError::Metric(_) => EXIT_NUMERIC,
            },
            Self::Metric(_) | Self::Fairness(_) => EXIT_NUMERIC,
            Self::Retrieval(e) => match e {
                RetrievalError::DegenerateEmbedding(_) => EXIT_NUMERIC,
                RetrievalError::KTooLarge { .. } | RetrievalError::Overlap(_) | RetrievalError::Invalid(_) => EXIT_CONFIG,
                _ => EXIT_DATA,
            },
            Self::Pca(e) => match e {
                PcaError::NotConverged { .. } => EXIT_NUMERIC,
                PcaError::BadK { .. } => EXIT_CONFIG,
                _ => EXIT_DATA,
            },
        }
    }
}
