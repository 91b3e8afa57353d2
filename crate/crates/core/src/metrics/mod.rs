//! Scalar evaluation metrics for every task family.

pub mod aggregate;
pub mod classification;
pub mod detection;
pub mod nlg;
pub mod segmentation;

pub use aggregate::{aggregate_per_group, MetricReport};
pub use classification::{auroc, binary_mcc, mcc, mean_auroc, ConfusionMatrix};
pub use detection::{detection_miou, grounding_accuracy, iou, map50, mean_average_precision, mean_iou, ScoredBox};
pub use nlg::{bleu, cider, rouge_l, rouge_l_corpus, tokenize};
pub use segmentation::{dice_pos, dsc, mean_foreground_dsc};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    /// The metric has no value for this input (e.g. AUROC with one class).
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid metric input: {0}")]
    Invalid(String),
}
