mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use xrprobe::metrics::nlg::{lcs_len, ROUGE_BETA};
use xrprobe::metrics::{
    auroc, bleu, cider, dice_pos, dsc, grounding_accuracy, iou, map50, mcc, rouge_l, rouge_l_corpus, tokenize,
    ConfusionMatrix, MetricError, ScoredBox,
};

fn random_binary(r: &mut impl Rng, n: usize, levels: u32) -> (Vec<f64>, Vec<bool>) {
    loop {
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            // few levels force ties
            let scores = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
            return (scores, labels);
        }
    }
}

#[test]
fn auroc_matches_pair_counting() {
    let mut r = rng(11);
    for case in 0..200 {
        let n = r.random_range(2..=64);
        let levels = if case % 2 == 0 { 5 } else { 1_000_000 };
        let (s, l) = random_binary(&mut r, n, levels);
        let got = auroc(&s, &l).unwrap();
        assert!((got - auroc_pairs(&s, &l)).abs() <= 1e-12, "case {case}");
    }
}

#[test]
fn auroc_worked_examples() {
    assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.3; 4], &[false, true, false, true]).unwrap(), 0.5);
    assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(MetricError::Undefined(_))));
}

#[test]
fn auroc_in_f32() {
    let s: Vec<f32> = vec![0.1, 0.4, 0.35, 0.8];
    assert_eq!(auroc(&s, &[false, false, true, true]).unwrap(), 0.75);
}

#[test]
fn mcc_matches_direct_formulas() {
    let mut r = rng(12);
    for case in 0..200 {
        let k = if case < 100 { 2 } else { r.random_range(3..=5) };
        let rows: Vec<Vec<u64>> = (0..k).map(|_| (0..k).map(|_| r.random_range(0..12)).collect()).collect();
        if rows.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        let got = mcc(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        let want = if k == 2 {
            mcc_binary(rows[1][1] as f64, rows[0][0] as f64, rows[0][1] as f64, rows[1][0] as f64)
        } else {
            mcc_correlation(&rows)
        };
        assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
        if k == 2 {
            assert!((got - mcc_correlation(&rows)).abs() < 1e-12);
        }
    }
}

#[test]
fn mcc_worked_examples() {
    let m = |rows: Vec<Vec<u64>>| mcc(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
    assert_eq!(m(vec![vec![3, 0], vec![0, 5]]), 1.0);
    assert!((m(vec![vec![2, 1], vec![1, 2]]) - 1.0 / 3.0).abs() < 1e-15);
    // one predicted class only
    assert_eq!(m(vec![vec![4, 0], vec![6, 0]]), 0.0);
    assert_eq!(m(vec![vec![4, 0, 0], vec![6, 0, 0], vec![1, 0, 0]]), 0.0);
}

#[test]
fn dice_examples() {
    let t = |v: &[u8]| v.iter().map(|&b| b == 1).collect::<Vec<_>>();
    let pred = t(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
    let truth = t(&[0, 0, 1, 1, 1, 1, 0, 0, 0, 0]);
    assert_eq!(dsc(&pred, &truth, 0.0).unwrap(), 0.5);
    assert_eq!(dsc(&pred, &pred, 1.0).unwrap(), 1.0);
    assert_eq!(dsc(&[false; 4], &[false; 4], 1.0).unwrap(), 1.0);
    assert!((dice_pos(&[0.4, 0.8, 1.0], &[true, true, false]).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(dice_pos(&[1.0], &[true]).unwrap(), 1.0);
    assert!(dice_pos(&[1.0], &[false]).is_err());
}

fn sb(x0: f64, y0: f64, x1: f64, y1: f64) -> ScoredBox<f64> {
    ScoredBox::new(x0, y0, x1, y1, 0)
}

#[test]
fn box_examples() {
    assert_eq!(iou(&sb(0.0, 0.0, 10.0, 10.0), &sb(0.0, 0.0, 10.0, 10.0)), 1.0);
    assert!((iou(&sb(0.0, 0.0, 10.0, 10.0), &sb(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(iou(&sb(0.0, 0.0, 1.0, 1.0), &sb(2.0, 2.0, 3.0, 3.0)), 0.0);
    let a = [sb(0.0, 0.0, 10.0, 10.0)];
    assert_eq!(grounding_accuracy(&a, &a, 0.5).unwrap(), 1.0);
    assert_eq!(grounding_accuracy(&[sb(5.0, 0.0, 15.0, 10.0)], &a, 0.5).unwrap(), 0.0);
    // IoU exactly one half is not counted
    assert_eq!(grounding_accuracy(&[sb(0.0, 0.0, 10.0, 5.0)], &a, 0.5).unwrap(), 0.0);
}

#[test]
fn map_hand_traced_half() {
    let truth = vec![vec![sb(0.0, 0.0, 10.0, 10.0)]];
    // IoU 0.3 at high confidence, then IoU 0.7 at low confidence
    let miss = sb(0.0, 0.0, 3.0, 10.0).with_confidence(0.9);
    let hit = sb(0.0, 0.0, 7.0, 10.0).with_confidence(0.4);
    assert_eq!(map50(&[vec![miss, hit]], &truth).unwrap(), 0.5);
    assert_eq!(map50(&[vec![sb(0.0, 0.0, 6.0, 10.0).with_confidence(0.5)]], &truth).unwrap(), 1.0);
}

fn random_boxes(r: &mut impl Rng, max: usize, conf: bool) -> Vec<Bx> {
    (0..r.random_range(0..=max))
        .map(|_| {
            let (x0, y0) = (r.random_range(0..8) as f64, r.random_range(0..8) as f64);
            Bx {
                x0,
                y0,
                x1: x0 + r.random_range(1..6) as f64,
                y1: y0 + r.random_range(1..6) as f64,
                class: r.random_range(0..2),
                conf: if conf { r.random_range(0..10) as f64 / 10.0 } else { 1.0 },
            }
        })
        .collect()
}

fn to_scored(v: &[Bx], conf: bool) -> Vec<ScoredBox<f64>> {
    v.iter()
        .map(|b| {
            let s = ScoredBox::new(b.x0, b.y0, b.x1, b.y1, b.class);
            if conf {
                s.with_confidence(b.conf)
            } else {
                s
            }
        })
        .collect()
}

#[test]
fn map_matches_exhaustive_oracle() {
    let mut r = rng(13);
    let mut checked = 0;
    while checked < 1000 {
        let images = r.random_range(1..=3);
        let preds: Vec<Vec<Bx>> = (0..images).map(|_| random_boxes(&mut r, 4, true)).collect();
        let truths: Vec<Vec<Bx>> = (0..images).map(|_| random_boxes(&mut r, 4, false)).collect();
        let p: Vec<_> = preds.iter().map(|v| to_scored(v, true)).collect();
        let t: Vec<_> = truths.iter().map(|v| to_scored(v, false)).collect();
        match map50(&p, &t) {
            Ok(v) => assert!((v - map50_oracle(&preds, &truths)).abs() < 1e-12, "case {checked}"),
            Err(MetricError::Undefined(_)) => continue,
            Err(e) => panic!("{e}"),
        }
        checked += 1;
    }
}

fn f_beta(p: f64, r: f64) -> f64 {
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

#[test]
fn nlg_golden_corpus() {
    let (c, r) = golden();
    for n in 1..=4 {
        let got = bleu(&c, &r, n).unwrap();
        assert!((got - golden_bleu(n)).abs() < 1e-9, "BLEU-{n}: {got}");
    }
    // (lcs, candidate length, reference length) per reference, traced by hand
    let traced: [&[(f64, f64, f64)]; 10] = [
        &[(5.0, 5.0, 5.0)],
        &[(3.0, 4.0, 4.0)],
        &[(3.0, 3.0, 5.0)],
        &[(2.0, 4.0, 4.0)],
        &[(4.0, 4.0, 6.0), (3.0, 4.0, 3.0)],
        &[(2.0, 2.0, 4.0)],
        &[(4.0, 5.0, 6.0)],
        &[(2.0, 4.0, 2.0)],
        &[(2.0, 5.0, 6.0)],
        &[(0.0, 3.0, 3.0)],
    ];
    let mut sum = 0.0;
    for (i, refs) in traced.iter().enumerate() {
        let p = refs.iter().map(|t| t.0 / t.1).fold(0.0, f64::max);
        let rc = refs.iter().map(|t| t.0 / t.2).fold(0.0, f64::max);
        let want = f_beta(p, rc);
        assert!((rouge_l(&c[i], &r[i]) - want).abs() < 1e-12, "pair {i}");
        for (k, t) in refs.iter().enumerate() {
            assert_eq!(lcs_len(&c[i], &r[i][k]) as f64, t.0);
        }
        sum += want;
    }
    assert!((rouge_l_corpus(&c, &r).unwrap() - sum / 10.0).abs() < 1e-9);
    assert!((rouge_l_corpus(&c, &r).unwrap() - 0.637_912_914_677_757_1).abs() < 1e-9);

    let ci = cider(&c, &r).unwrap();
    let per = [
        10.0,
        4.652_935_276_266_776,
        5.196_344_560_906_042,
        2.569_601_942_933_443,
        6.603_963_465_056_541,
        3.140_892_206_923_19,
        2.263_860_859_568_246,
        1.691_088_601_018_56,
        1.543_547_859_721_667,
        0.0,
    ];
    for (i, want) in per.iter().enumerate() {
        assert!((ci.per_candidate[i] - want).abs() < 1e-9, "CIDEr pair {i}: {}", ci.per_candidate[i]);
    }
    assert!((ci.corpus - 3.766_223_477_239_447).abs() < 1e-9);
}

#[test]
fn nlg_small_cases() {
    let c = toks(&["the cat"]);
    let r = vec![toks(&["the cat sat"])];
    assert!((bleu(&c, &r, 1).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    assert_eq!(bleu(&toks(&["a b c d"]), &[toks(&["a b c d"])], 4).unwrap(), 1.0);
    assert_eq!(bleu(&toks(&["x y"]), &[toks(&["a b"])], 1).unwrap(), 0.0);

    let p: f64 = 2.0 / 3.0;
    let rc: f64 = 0.5;
    let want = (1.0 + 1.44) * p * rc / (rc + 1.44 * p);
    assert!((rouge_l(&tokenize("a b c"), &toks(&["a x b y"])) - want).abs() < 1e-15);
    assert_eq!(rouge_l(&tokenize("a b"), &toks(&["a b"])), 1.0);
    assert_eq!(rouge_l(&tokenize("a b"), &toks(&["c d"])), 0.0);

    let two = cider(
        &toks(&["left lung is clear", "heart is mildly enlarged"]),
        &[toks(&["left lung is clear"]), toks(&["heart is mildly enlarged"])],
    )
        .unwrap();
    assert!(two.per_candidate.iter().all(|&v| (v - 10.0).abs() < 1e-12));
    assert!((two.corpus - 10.0).abs() < 1e-12);
    assert_eq!(cider(&toks(&["a b"]), &[toks(&["a b"])]).unwrap().corpus, 0.0);
}

#[test]
fn tokenizer_rules() {
    assert_eq!(tokenize("No  acute, Process!"), vec!["no", "acute", "process"]);
    assert_eq!(tokenize("3.5-cm"), vec!["3", "5", "cm"]);
}

proptest! {
    #[test]
    fn auroc_is_invariant_under_monotone_maps(
        pairs in prop::collection::vec((-100i32..100, any::<bool>()), 2..40)
    ) {
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let t: Vec<f64> = s.iter().map(|v| (v / 50.0).exp() * 3.0 + 1.0).collect();
        prop_assert_eq!(auroc(&s, &labels).unwrap(), auroc(&t, &labels).unwrap());
    }

    #[test]
    fn auroc_negation_complements(
        scores in prop::collection::hash_set(-1000i32..1000, 2..40), seed in any::<u64>()
    ) {
        let s: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let mut r = rng(seed);
        let labels: Vec<bool> = (0..s.len()).map(|i| if i < 2 { i == 0 } else { r.random_bool(0.5) }).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = auroc(&s, &labels).unwrap();
        prop_assert!((auroc(&neg, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn mcc_is_invariant_under_class_relabeling(
        counts in prop::collection::vec(0u64..9, 9), perm in Just([2usize, 0, 1])
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let rows: Vec<Vec<u64>> = counts.chunks(3).map(<[u64]>::to_vec).collect();
        let permuted: Vec<Vec<u64>> = (0..3).map(|i| (0..3).map(|j| rows[perm[i]][perm[j]]).collect()).collect();
        let a = mcc(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = mcc(&ConfusionMatrix::from_rows(&permuted).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn dsc_is_symmetric(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
        let a: Vec<bool> = bits.iter().map(|b| b.0).collect();
        let b: Vec<bool> = bits.iter().map(|b| b.1).collect();
        prop_assert_eq!(dsc(&a, &b, 1.0).unwrap(), dsc(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn corpus_metrics_ignore_pair_order(rot in 0usize..10) {
        let (mut c, mut r) = golden();
        let (b0, r0, c0) = (bleu(&c, &r, 4).unwrap(), rouge_l_corpus(&c, &r).unwrap(), cider(&c, &r).unwrap().corpus);
        c.rotate_left(rot);
        r.rotate_left(rot);
        prop_assert!((bleu(&c, &r, 4).unwrap() - b0).abs() < 1e-12);
        prop_assert!((rouge_l_corpus(&c, &r).unwrap() - r0).abs() < 1e-12);
        prop_assert!((cider(&c, &r).unwrap().corpus - c0).abs() < 1e-12);
    }
}
