//! Subgroup train/eval matrices, bootstrap AUC distributions and
//! Mann-Whitney comparisons between subgroup-trained models.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetManifest, ManifestEntry, Sex, Split};
use crate::metrics::{self, MetricError};
use crate::rng::{keyed, stream};

pub const DEFAULT_RESAMPLES: usize = 200;
pub const MAX_REDRAWS: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("empty sample")]
    Empty,
    #[error("resample {resample} stayed single-class after {attempts} draws")]
    SingleClass { resample: usize, attempts: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Sex,
    Age,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Male,
    Female,
    Young,
    Middle,
    Elderly,
    All,
}

/// Age bins `[0, 35)`, `[35, 60)`, `[60, inf)`.
pub fn age_group(age_years: f32) -> Group {
    if age_years < 35.0 {
        Group::Young
    } else if age_years < 60.0 {
        Group::Middle
    } else {
        Group::Elderly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub axis: Axis,
}

impl SubgroupSpec {
    pub fn new(axis: Axis) -> Self {
        Self { axis }
    }

    fn bins(&self) -> &'static [Group] {
        match self.axis {
            Axis::Sex => &[Group::Male, Group::Female],
            Axis::Age => &[Group::Young, Group::Middle, Group::Elderly],
        }
    }

    /// Every bin plus `All`.
    pub fn train_groups(&self) -> Vec<Group> {
        let mut g = self.bins().to_vec();
        g.push(Group::All);
        g
    }

    pub fn eval_groups(&self) -> Vec<Group> {
        self.bins().to_vec()
    }

    /// Pairs of train groups compared on each eval group. On the sex axis
    /// every pair of the three train groups; on the age axis the three bin pairs.
    pub fn comparison_pairs(&self) -> Vec<(Group, Group)> {
        let groups = match self.axis {
            Axis::Sex => self.train_groups(),
            Axis::Age => self.bins().to_vec(),
        };
        let mut pairs = Vec::new();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                pairs.push((groups[i], groups[j]));
            }
        }
        pairs
    }

    /// The entry's bin on this axis, if its demographics are recorded.
    pub fn group_of(&self, entry: &ManifestEntry) -> Option<Group> {
        match self.axis {
            Axis::Sex => entry.sex.map(|s| match s {
                Sex::M => Group::Male,
                Sex::F => Group::Female,
            }),
            Axis::Age => entry.age_years.filter(|a| *a >= 0.0).map(age_group),
        }
    }

    fn contains(&self, group: Group, entry: &ManifestEntry) -> bool {
        group == Group::All || self.group_of(entry) == Some(group)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub train_group: Group,
    pub eval_group: Group,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub train_group: Option<Group>,
    pub eval_group: Option<Group>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMatrix {
    pub axis: Axis,
    pub cells: Vec<SubgroupCell>,
    pub skipped: Vec<SkippedCell>,
}

/// All (train group, eval group) cells of `axis`. Train and validation
/// subsets are filtered by the train group, the test subset by the eval group.
/// Cells with an empty subset are skipped with a reason; a manifest with no
/// demographics on the axis yields no cells at all.
pub fn subgroup_matrix(manifest: &DatasetManifest, axis: Axis) -> SubgroupMatrix {
    let spec = SubgroupSpec::new(axis);
    let mut out = SubgroupMatrix { axis, cells: Vec::new(), skipped: Vec::new() };
    if manifest.entries.iter().all(|e| spec.group_of(e).is_none()) {
        out.skipped.push(SkippedCell {
            train_group: None,
            eval_group: None,
            reason: format!("manifest has no {axis:?} metadata"),
        });
        return out;
    }
    let ids = |split: Split, group: Group| -> Vec<String> {
        manifest.split(split).filter(|e| spec.contains(group, e)).map(|e| e.image_id.clone()).collect()
    };
    for train_group in spec.train_groups() {
        for eval_group in spec.eval_groups() {
            let cell = SubgroupCell {
                train_group,
                eval_group,
                train_ids: ids(Split::Train, train_group),
                val_ids: ids(Split::Val, train_group),
                test_ids: ids(Split::Test, eval_group),
            };
            let empty: Vec<&str> = [("train", &cell.train_ids), ("val", &cell.val_ids), ("test", &cell.test_ids)]
                .iter()
                .filter(|(_, v)| v.is_empty())
                .map(|(n, _)| *n)
                .collect();
            if empty.is_empty() {
                out.cells.push(cell);
            } else {
                out.skipped.push(SkippedCell {
                    train_group: Some(train_group),
                    eval_group: Some(eval_group),
                    reason: format!("empty {} subset", empty.join("/")),
                });
            }
        }
    }
    out
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub n_resamples: usize,
    pub values: Vec<f64>,
    pub median: f64,
    /// 2.5th and 97.5th percentiles.
    pub lower: f64,
    pub upper: f64,
}

impl BootstrapResult {
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            n_resamples: values.len(),
            median: percentile(&sorted, 50.0),
            lower: percentile(&sorted, 2.5),
            upper: percentile(&sorted, 97.5),
            values,
        }
    }
}

/// Bootstrap distribution of `statistic` over resamples of `0..n`.
///
/// Resample `i` draws from stream `(seed, BOOTSTRAP, i)`; a draw on which the
/// statistic is undefined is redrawn from the same stream, at most
/// [`MAX_REDRAWS`] times.
pub fn bootstrap<F>(n: usize, resamples: usize, seed: u64, statistic: F) -> Result<BootstrapResult, FairnessError>
where
    F: Fn(&[usize]) -> Result<f64, MetricError>,
{
    if n == 0 || resamples == 0 {
        return Err(FairnessError::Empty);
    }
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for i in 0..resamples {
        let mut rng = keyed(seed, stream::BOOTSTRAP, i as u64);
        let mut value = None;
        for _ in 0..MAX_REDRAWS {
            idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
            match statistic(&idx) {
                Ok(v) => {
                    value = Some(v);
                    break;
                }
                Err(MetricError::Undefined(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        values.push(value.ok_or(FairnessError::SingleClass { resample: i, attempts: MAX_REDRAWS })?);
    }
    Ok(BootstrapResult::from_values(values))
}

pub fn bootstrap_auc(scores: &[f64], labels: &[bool], resamples: usize, seed: u64) -> Result<BootstrapResult, FairnessError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Invalid("scores and labels differ in length".into()).into());
    }
    metrics::auroc(scores, labels)?;
    bootstrap(scores.len(), resamples, seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&k| scores[k]).collect();
        let l: Vec<bool> = idx.iter().map(|&k| labels[k]).collect();
        metrics::auroc(&s, &l)
    })
}

/// Bootstrap of the mean per-label AUROC over row-major `scores`/`labels`
/// with `columns` labels per item.
pub fn bootstrap_mean_auc(
    scores: &[f64],
    labels: &[bool],
    columns: usize,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, FairnessError> {
    if columns == 0 || scores.len() != labels.len() || scores.len() % columns != 0 {
        return Err(MetricError::Invalid("scores/labels do not form a row-major matrix".into()).into());
    }
    metrics::mean_auroc(scores, labels, columns)?;
    bootstrap(scores.len() / columns, resamples, seed, |idx| {
        let mut s = Vec::with_capacity(scores.len());
        let mut l = Vec::with_capacity(labels.len());
        for &k in idx {
            s.extend_from_slice(&scores[k * columns..(k + 1) * columns]);
            l.extend_from_slice(&labels[k * columns..(k + 1) * columns]);
        }
        metrics::mean_auroc(&s, &l, columns)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs with `a > b`, ties counting one half.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: MwMethod,
}

/// Two-sided Mann-Whitney U test.
///
/// Exact when `min(n, m) <= 8`, `n + m <= 16` and there are no ties;
/// otherwise the normal approximation with tie and continuity corrections.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, FairnessError> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(FairnessError::Empty);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = metrics::classification::midranks(&pooled);
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut ties = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            ties = true;
            tie_term += t * t * t - t;
        }
        i = j + 1;
    }

    if !ties && n.min(m) <= 8 && n + m <= 16 {
        let counts = u_distribution(n, m);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum();
        let upper: f64 = counts[k..].iter().sum();
        let p = (2.0 * lower.min(upper) / total).min(1.0);
        return Ok(MannWhitney { u, p, method: MwMethod::Exact });
    }

    let (nf, mf) = (n as f64, m as f64);
    let big_n = nf + mf;
    let mean = nf * mf / 2.0;
    let var = nf * mf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p, method: MwMethod::Normal })
}

/// Number of orderings of `n` a-values and `m` b-values giving each U in `0..=n*m`.
fn u_distribution(n: usize, m: usize) -> Vec<f64> {
    // f[i][j][u]: arrangements of i a's and j b's with statistic u
    let mut f = vec![vec![Vec::<f64>::new(); m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            let mut row = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                row[0] = 1.0;
            } else {
                // largest value is an a (beats all j b's) or a b
                for (u, slot) in row.iter_mut().enumerate() {
                    if u >= j {
                        *slot += f[i - 1][j].get(u - j).copied().unwrap_or(0.0);
                    }
                    *slot += f[i][j - 1].get(u).copied().unwrap_or(0.0);
                }
            }
            f[i][j] = row;
        }
    }
    f[n][m].clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub train_group: Group,
    pub eval_group: Group,
    pub auc: f64,
    pub bootstrap: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub eval_group: Group,
    pub group_a: Group,
    pub group_b: Group,
    pub median_a: f64,
    pub median_b: f64,
    pub u: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub axis: Axis,
    pub alpha: f64,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
    pub skipped: Vec<SkippedCell>,
    pub significant_count: usize,
    pub non_significant_count: usize,
}

/// Compares the bootstrap samples of every train-group pair on each eval
/// group. A pair is significant iff `p < alpha`.
pub fn fairness_report(
    axis: Axis,
    cells: Vec<CellResult>,
    skipped: Vec<SkippedCell>,
    alpha: f64,
) -> Result<FairnessReport, FairnessError> {
    let spec = SubgroupSpec::new(axis);
    let by_key: BTreeMap<(Group, Group), &CellResult> =
        cells.iter().map(|c| ((c.train_group, c.eval_group), c)).collect();
    let mut comparisons = Vec::new();
    let mut skipped = skipped;
    for eval_group in spec.eval_groups() {
        for (ga, gb) in spec.comparison_pairs() {
            match (by_key.get(&(ga, eval_group)), by_key.get(&(gb, eval_group))) {
                (Some(a), Some(b)) => {
                    let test = mann_whitney(&a.bootstrap.values, &b.bootstrap.values)?;
                    comparisons.push(Comparison {
                        eval_group,
                        group_a: ga,
                        group_b: gb,
                        median_a: a.bootstrap.median,
                        median_b: b.bootstrap.median,
                        u: test.u,
                        p: test.p,
                        significant: test.p < alpha,
                    });
                }
                _ => skipped.push(SkippedCell {
                    train_group: None,
                    eval_group: Some(eval_group),
                    reason: format!("comparison {ga:?} vs {gb:?} lacks a cell"),
                }),
            }
        }
    }
    let significant_count = comparisons.iter().filter(|c| c.significant).count();
    Ok(FairnessReport {
        axis,
        alpha,
        non_significant_count: comparisons.len() - significant_count,
        significant_count,
        cells,
        comparisons,
        skipped,
    })
}
