//! Per-group aggregation (e.g. per-study predictions) and seed-level reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Mean score per group id, keyed in ascending id order.
pub fn aggregate_per_group<'a>(
    scores: &[f64],
    groups: impl IntoIterator<Item = &'a str>,
) -> Result<BTreeMap<String, f64>, MetricError> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut n = 0usize;
    for (group, &score) in groups.into_iter().zip(scores) {
        let slot = acc.entry(group.to_owned()).or_insert((0.0, 0));
        slot.0 += score;
        slot.1 += 1;
        n += 1;
    }
    if n != scores.len() {
        return Err(MetricError::Invalid("one group id per score required".into()));
    }
    Ok(acc.into_iter().map(|(g, (s, c))| (g, s / c as f64)).collect())
}

/// One named metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Vec<f64>>,
    pub n: usize,
}

impl MetricReport {
    pub fn from_seeds(metric: impl Into<String>, per_seed: Vec<f64>) -> Self {
        let n = per_seed.len();
        let mean = if n == 0 { f64::NAN } else { per_seed.iter().sum::<f64>() / n as f64 };
        Self { metric: metric.into(), per_seed, mean, bootstrap: None, n }
    }
}
