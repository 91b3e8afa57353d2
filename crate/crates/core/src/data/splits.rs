//! Limited-data training subsets.
//!
//! Each stratum (class) is sorted by image id, shuffled with the stream keyed
//! by `(seed, stratum)`, and truncated to `round_half_up(fraction * count)`.
//! The resulting subset is returned sorted by image id, so membership depends
//! only on the manifest, the fraction and the seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, LabelKind, Split};
use super::DataError;
use crate::rng::{keyed, stream};

/// Per-stratum sample size: `fraction * count` rounded half up.
pub fn stratum_size(fraction: f64, count: usize) -> usize {
    // the epsilon absorbs binary representation error of decimal fractions
    ((fraction * count as f64) + 0.5 + 1e-9).floor() as usize
}

/// One stratified subset of the train split.
pub fn fraction_subset(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<Vec<String>, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Invalid(format!("fraction {fraction} must lie in (0, 1]")));
    }
    let mut strata: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for e in manifest.split(Split::Train) {
        strata.entry(e.label.stratum(manifest.num_classes)).or_default().push(&e.image_id);
    }
    let mut subset: Vec<String> = Vec::new();
    for (&stratum, members) in strata.iter_mut() {
        members.sort_unstable();
        let take = if fraction >= 1.0 { members.len() } else { stratum_size(fraction, members.len()) };
        if take < members.len() {
            let mut rng = keyed(seed, stream::SPLIT, stratum as u64);
            members.shuffle(&mut rng);
        }
        subset.extend(members[..take].iter().map(|s| (*s).to_owned()));
    }
    subset.sort_unstable();

    let classified = matches!(manifest.label_kind, LabelKind::Binary | LabelKind::Multiclass | LabelKind::Multilabel);
    if classified {
        let num_classes = if manifest.label_kind == LabelKind::Binary { 2 } else { manifest.num_classes };
        let mut support = vec![0usize; num_classes];
        let by_id: BTreeMap<&str, _> = manifest.entries.iter().map(|e| (e.image_id.as_str(), e)).collect();
        for id in &subset {
            for c in by_id[id.as_str()].label.positive_classes() {
                if c < num_classes {
                    support[c] += 1;
                }
            }
        }
        if let Some(class) = support.iter().position(|&n| n == 0) {
            return Err(DataError::InsufficientSupport { class, fraction });
        }
    } else if subset.is_empty() {
        return Err(DataError::InsufficientSupport { class: 0, fraction });
    }
    Ok(subset)
}

/// Subsets for every seed; the same call from any backbone yields the same splits.
pub fn make_fraction_splits(
    manifest: &DatasetManifest,
    fraction: f64,
    seeds: &[u64],
) -> Result<Vec<Vec<String>>, DataError> {
    seeds.iter().map(|&s| fraction_subset(manifest, fraction, s)).collect()
}
