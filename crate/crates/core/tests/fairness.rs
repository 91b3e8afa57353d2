mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use xrprobe::data::{DatasetManifest, LabelKind, LabelValue, ManifestEntry, Sex, Split};
use xrprobe::fairness::*;
use xrprobe::metrics::auroc;

#[test]
fn exact_path_equals_enumeration() {
    let mut cases = 0;
    for n in 1..10 {
        for m in 1..=10 - n {
            for (a, b) in interleavings(n, m) {
                let r = mann_whitney(&a, &b).unwrap();
                let (u, p) = mann_whitney_enumerated(&a, &b);
                assert_eq!(r.method, MwMethod::Exact);
                assert_eq!((r.u, r.p), (u, p), "a={a:?} b={b:?}");
                cases += 1;
            }
        }
    }
    assert_eq!(cases, (2..=10).map(|t: u32| (1 << t) - 2).sum::<u32>());
}

#[test]
fn u_statistics_are_complementary() {
    let mut r = rng(11);
    for _ in 0..500 {
        let (n, m) = (r.random_range(1..40), r.random_range(1..40));
        let a: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
        let (ab, ba) = (mann_whitney(&a, &b).unwrap(), mann_whitney(&b, &a).unwrap());
        assert_eq!(ab.u + ba.u, (n * m) as f64);
        assert!((ab.p - ba.p).abs() < 1e-12);
    }
}

#[test]
fn small_exact_example() {
    let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
    assert_eq!(r.u, 0.0);
    assert_eq!(r.p, 2.0 / 6.0);
}

#[test]
fn large_shift_is_highly_significant() {
    let mut r = rng(3);
    let b: Vec<f64> = (0..200).map(|_| gauss(&mut r)).collect();
    let a: Vec<f64> = b.iter().map(|v| v + 100.0).collect();
    let t = mann_whitney(&a, &b).unwrap();
    assert_eq!(t.method, MwMethod::Normal);
    assert_eq!(t.u, 40000.0);
    assert!(t.p < 1e-10);
}

#[test]
fn empty_samples_are_rejected() {
    assert_eq!(mann_whitney(&[], &[1.0]), Err(FairnessError::Empty));
}

fn random_test_set(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let scores = (0..n).map(|_| r.random::<f64>()).collect();
    (scores, labels)
}

#[test]
fn bootstrap_is_bitwise_deterministic() {
    let (s, l) = random_test_set(100, 1);
    let a = bootstrap_auc(&s, &l, 200, 42).unwrap();
    let b = bootstrap_auc(&s, &l, 200, 42).unwrap();
    assert_eq!(a.values.len(), 200);
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.values, bootstrap_auc(&s, &l, 200, 43).unwrap().values);
}

#[test]
fn bootstrap_spread_matches_analytic_standard_error() {
    let (s, l) = random_test_set(100, 5);
    let a = auroc(&s, &l).unwrap();
    let (n1, n2) = (50.0, 50.0);
    let (q1, q2) = (a / (2.0 - a), 2.0 * a * a / (1.0 + a));
    let se = ((a * (1.0 - a) + (n1 - 1.0) * (q1 - a * a) + (n2 - 1.0) * (q2 - a * a)) / (n1 * n2)).sqrt();
    let r = bootstrap_auc(&s, &l, 200, 0).unwrap();
    let mean = r.values.iter().sum::<f64>() / 200.0;
    let std = (r.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!(std > se / 3.0 && std < se * 3.0, "std {std} se {se}");
}

#[test]
fn separated_scores_stay_perfect() {
    let s: Vec<f64> = (0..30).map(f64::from).collect();
    let l: Vec<bool> = (0..30).map(|i| i >= 15).collect();
    let r = bootstrap_auc(&s, &l, 200, 9).unwrap();
    assert!(r.values.iter().all(|&v| v == 1.0));
    assert_eq!((r.lower, r.median, r.upper), (1.0, 1.0, 1.0));
}

#[test]
fn single_class_sets_are_rejected() {
    assert!(bootstrap_auc(&[0.1, 0.2], &[true, true], 5, 0).is_err());
    assert!(matches!(
        bootstrap(4, 3, 0, |_| Err(xrprobe::MetricError::Undefined("one class".into()))),
        Err(FairnessError::SingleClass { resample: 0, attempts: MAX_REDRAWS })
    ));
}

#[test]
fn multilabel_bootstrap_averages_columns() {
    // column 1 is a perfect ranker, column 0 a perfectly inverted one
    let n = 20;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % 2 == 0;
        scores.extend([if y { 0.0 } else { 1.0 }, if y { 1.0 } else { 0.0 }]);
        labels.extend([y, y]);
    }
    let r = bootstrap_mean_auc(&scores, &labels, 2, 50, 1).unwrap();
    assert!(r.values.iter().all(|&v| v == 0.5));
}

proptest! {
    #[test]
    fn bootstrap_median_lies_within_values(seed in 0u64..500, n in 10usize..60) {
        let (s, l) = random_test_set(n, seed);
        let r = bootstrap_auc(&s, &l, 40, seed).unwrap();
        let lo = r.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= r.lower && r.lower <= r.median && r.median <= r.upper && r.upper <= hi);
        prop_assert!(r.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn two_sided_p_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 1..12), b in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let (ab, ba) = (mann_whitney(&a, &b).unwrap(), mann_whitney(&b, &a).unwrap());
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }
}

fn entry(i: usize, split: Split, sex: Option<Sex>, age: Option<f32>) -> ManifestEntry {
    ManifestEntry {
        image_id: format!("im{i:03}"),
        label: LabelValue::Binary((i % 2) as u8),
        split,
        sex,
        age_years: age,
        group_id: None,
        mask: None,
    }
}

fn demographic_manifest() -> DatasetManifest {
    let splits = [Split::Train, Split::Val, Split::Test];
    let entries = (0..60)
        .map(|i| {
            let sex = if i % 3 == 0 { Sex::F } else { Sex::M };
            entry(i, splits[i % 3], Some(sex), Some([20.0, 45.0, 70.0][i / 3 % 3]))
        })
        .collect();
    DatasetManifest::new(LabelKind::Binary, 2, entries)
}

#[test]
fn sex_axis_has_six_cells() {
    let mut m = demographic_manifest();
    // spread both sexes over every split
    for (i, e) in m.entries.iter_mut().enumerate() {
        e.sex = Some(if i % 2 == 0 { Sex::F } else { Sex::M });
    }
    let mx = subgroup_matrix(&m, Axis::Sex);
    assert_eq!(mx.cells.len(), 6);
    assert!(mx.skipped.is_empty());
    let all_female = mx.cells.iter().find(|c| c.train_group == Group::All && c.eval_group == Group::Female).unwrap();
    assert_eq!(all_female.train_ids.len(), 20);
    assert!(all_female.test_ids.iter().all(|id| id[2..].parse::<usize>().unwrap() % 2 == 0));
}

#[test]
fn age_axis_cells_and_comparisons() {
    let m = demographic_manifest();
    let mx = subgroup_matrix(&m, Axis::Age);
    assert_eq!(mx.cells.len(), 12);
    let expect = |g| match g {
        Group::Elderly => 6,
        _ => 7,
    };
    assert!(mx.cells.iter().all(|c| c.test_ids.len() == expect(c.eval_group)));
    assert_eq!(SubgroupSpec::new(Axis::Age).comparison_pairs(), vec![
        (Group::Young, Group::Middle),
        (Group::Young, Group::Elderly),
        (Group::Middle, Group::Elderly)
    ]);
}

#[test]
fn empty_group_is_skipped_with_reason() {
    let entries = (0..12).map(|i| entry(i, [Split::Train, Split::Val, Split::Test][i % 3], Some(Sex::M), None)).collect();
    let mx = subgroup_matrix(&DatasetManifest::new(LabelKind::Binary, 2, entries), Axis::Sex);
    assert_eq!(mx.cells.len(), 2);
    assert_eq!(mx.skipped.len(), 4);
    assert!(mx.skipped.iter().all(|s| s.reason.starts_with("empty")));
}

#[test]
fn missing_demographics_yield_no_cells() {
    let entries = (0..9).map(|i| entry(i, Split::Test, None, None)).collect();
    let m = DatasetManifest::new(LabelKind::Binary, 2, entries);
    for axis in [Axis::Sex, Axis::Age] {
        let mx = subgroup_matrix(&m, axis);
        assert!(mx.cells.is_empty());
        assert_eq!(mx.skipped.len(), 1);
    }
}

fn cell(train: Group, eval: Group, values: Vec<f64>) -> CellResult {
    let b = BootstrapResult::from_values(values);
    CellResult { train_group: train, eval_group: eval, auc: b.median, bootstrap: b }
}

#[test]
fn report_flags_follow_the_test() {
    let mut r = rng(8);
    let mut cells = Vec::new();
    for eval in [Group::Young, Group::Middle, Group::Elderly] {
        for (k, train) in [Group::Young, Group::Middle, Group::Elderly].into_iter().enumerate() {
            let shift = if eval == Group::Elderly { 0.0 } else { 0.05 * k as f64 };
            cells.push(cell(train, eval, (0..200).map(|_| 0.7 + shift + 0.01 * gauss(&mut r)).collect()));
        }
    }
    let rep = fairness_report(Axis::Age, cells.clone(), Vec::new(), DEFAULT_ALPHA).unwrap();
    assert_eq!(rep.comparisons.len(), 9);
    // tabulate directly against the test
    let mut non_sig = 0;
    for c in &rep.comparisons {
        let find = |g| cells.iter().find(|x| x.train_group == g && x.eval_group == c.eval_group).unwrap();
        let t = mann_whitney(&find(c.group_a).bootstrap.values, &find(c.group_b).bootstrap.values).unwrap();
        assert_eq!(c.p, t.p);
        assert_eq!(c.significant, t.p < 0.05);
        non_sig += usize::from(!c.significant);
    }
    assert_eq!(rep.non_significant_count, non_sig);
    assert_eq!(rep.significant_count + non_sig, 9);
    assert!(rep.comparisons.iter().filter(|c| c.eval_group != Group::Elderly).all(|c| c.significant));
}

#[test]
fn equal_samples_are_never_flagged() {
    let values: Vec<f64> = (0..200).map(|i| 0.8 + (i % 7) as f64 * 1e-3).collect();
    let cells: Vec<_> = [Group::Male, Group::Female, Group::All]
        .into_iter()
        .flat_map(|t| [Group::Male, Group::Female].map(|e| cell(t, e, values.clone())))
        .collect();
    let rep = fairness_report(Axis::Sex, cells, Vec::new(), DEFAULT_ALPHA).unwrap();
    assert_eq!(rep.comparisons.len(), 6);
    assert_eq!(rep.significant_count, 0);
}

#[test]
fn missing_cells_become_skips() {
    let mut values: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
    values.shuffle(&mut rng(1));
    let cells = vec![cell(Group::Male, Group::Male, values)];
    let rep = fairness_report(Axis::Sex, cells, Vec::new(), DEFAULT_ALPHA).unwrap();
    assert!(rep.comparisons.is_empty());
    assert_eq!(rep.skipped.len(), 6);
}
