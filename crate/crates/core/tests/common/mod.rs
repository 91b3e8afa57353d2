//! Independent oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use std::collections::HashMap;

use xrprobe::data::{EmbeddingBundle, EmbeddingRecord, LabelValue};
use xrprobe::metrics::tokenize;
use xrprobe::probe::{MaskTarget, Sample, Target};
use xrprobe::retrieval::RetrievalTask;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut impl Rng) -> f64 {
    // Box-Muller, kept local so the tests do not lean on the crate's sampler.
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---- metric oracles ----

/// (concordant + 0.5 tied) / (P * N) by direct pair enumeration.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// MCC as the Pearson correlation of one-hot truth and prediction indicators,
/// expanded sample by sample from the confusion counts.
pub fn mcc_correlation(rows: &[Vec<u64>]) -> f64 {
    let k = rows.len();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for (t, row) in rows.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            for _ in 0..c {
                let mut x = vec![0.0; k];
                let mut y = vec![0.0; k];
                x[t] = 1.0;
                y[p] = 1.0;
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let n = xs.len() as f64;
    let mean = |v: &[Vec<f64>], c: usize| v.iter().map(|r| r[c]).sum::<f64>() / n;
    let cov = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for c in 0..k {
            let (ma, mb) = (mean(a, c), mean(b, c));
            s += a.iter().zip(b).map(|(ra, rb)| (ra[c] - ma) * (rb[c] - mb)).sum::<f64>();
        }
        s
    };
    let d = (cov(&xs, &xs) * cov(&ys, &ys)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        cov(&xs, &ys) / d
    }
}

/// Textbook binary MCC from the four cell counts.
pub fn mcc_binary(tp: f64, tn: f64, fp: f64, fn_: f64) -> f64 {
    let d = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Bx {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub class: usize,
    pub conf: f64,
}

pub fn box_iou(a: &Bx, b: &Bx) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    let u = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
    if u <= 0.0 {
        0.0
    } else {
        inter / u
    }
}

/// mAP@50 computed the long way: visit detections in the greedy order, match
/// each against every still-free truth, then enumerate every cut point of the
/// ranking to build the PR curve and integrate its monotone envelope.
pub fn map50_oracle(preds: &[Vec<Bx>], truths: &[Vec<Bx>]) -> f64 {
    let mut classes: Vec<usize> =
        preds.iter().chain(truths).flat_map(|v| v.iter().map(|b| b.class)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut total = 0.0;
    for &c in &classes {
        let mut order: Vec<(f64, usize, usize)> = Vec::new();
        for (i, img) in preds.iter().enumerate() {
            for (k, b) in img.iter().enumerate() {
                if b.class == c {
                    order.push((b.conf, i, k));
                }
            }
        }
        // stable: equal confidences keep image/position order
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let gt: usize = truths.iter().map(|v| v.iter().filter(|b| b.class == c).count()).sum();
        let mut used: Vec<Vec<bool>> = truths.iter().map(|v| vec![false; v.len()]).collect();
        let mut tp = Vec::new();
        for &(_, i, k) in &order {
            let p = &preds[i][k];
            let mut best: Option<(usize, f64)> = None;
            for (t, b) in truths[i].iter().enumerate() {
                if b.class != c || used[i][t] {
                    continue;
                }
                let o = box_iou(p, b);
                match best {
                    Some((_, bo)) if bo >= o => {}
                    _ => best = Some((t, o)),
                }
            }
            match best {
                Some((t, o)) if o >= 0.5 => {
                    used[i][t] = true;
                    tp.push(true);
                }
                _ => tp.push(false),
            }
        }
        if gt == 0 || order.is_empty() {
            continue;
        }
        // every cut point of the ranking
        let mut points = vec![(0.0f64, 1.0f64)];
        for cut in 1..=tp.len() {
            let hits = tp[..cut].iter().filter(|&&h| h).count() as f64;
            points.push((hits / gt as f64, hits / cut as f64));
        }
        // area under the interpolated curve: precision at recall r is the max
        // precision over all points with recall >= r
        let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
        recalls.sort_by(f64::total_cmp);
        recalls.dedup();
        let mut ap = 0.0;
        for w in recalls.windows(2) {
            let p = points.iter().filter(|q| q.0 >= w[1]).map(|q| q.1).fold(0.0, f64::max);
            ap += (w[1] - w[0]) * p;
        }
        total += ap;
    }
    total / classes.len() as f64
}

/// Two-sided exact Mann-Whitney p by enumerating every placement of the
/// pooled ranks into the first sample (no ties).
pub fn mann_whitney_enumerated(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let n = a.len();
    let total = pooled.len();
    let u_of = |ranks: &[usize]| ranks.iter().sum::<usize>() as f64 - (n * (n + 1)) as f64 / 2.0;
    let observed: Vec<usize> = pooled.iter().enumerate().filter(|(_, p)| p.1).map(|(i, _)| i + 1).collect();
    let u = u_of(&observed);
    let (mut le, mut ge, mut count) = (0u64, 0u64, 0u64);
    for bits in 0u32..(1 << total) {
        if bits.count_ones() as usize != n {
            continue;
        }
        let ranks: Vec<usize> = (0..total).filter(|i| bits >> i & 1 == 1).map(|i| i + 1).collect();
        let v = u_of(&ranks);
        count += 1;
        if v <= u {
            le += 1;
        }
        if v >= u {
            ge += 1;
        }
    }
    let p = (2.0 * le.min(ge) as f64 / count as f64).min(1.0);
    (u, p)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, d: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * d + j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Unbiased sample covariance, row-major d x d.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut c = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    c.iter_mut().for_each(|v| *v /= n - 1.0);
    c
}

// ---- synthetic benchmarks ----

/// Two Gaussian blobs in `d` dimensions, means at -mu and +mu on every axis.
pub fn blobs(n: usize, d: usize, mu: f64, seed: u64) -> Vec<Sample<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let pos = i % 2 == 0;
            let m = if pos { mu } else { -mu };
            Sample::vector((0..d).map(|_| m + gauss(&mut r)).collect(), Target::Binary(pos))
        })
        .collect()
}

/// Four clusters at (±1, ±1); class 1 iff the signs differ.
pub fn xor(n: usize, noise: f64, seed: u64) -> Vec<Sample<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let (sx, sy) = ([1.0, -1.0][i % 2], [1.0, -1.0][(i / 2) % 2]);
            let x = vec![sx + noise * gauss(&mut r), sy + noise * gauss(&mut r)];
            Sample::vector(x, Target::Class(usize::from(sx != sy)))
        })
        .collect()
}

pub const MARK_Y: usize = 1;
pub const MARK_X: usize = 2;

/// A patch-grid image whose label says whether patch (MARK_Y, MARK_X) carries
/// a planted pattern, plus a CLS vector that only sees the grid mean under
/// heavy nuisance noise. Returns (grid sample, cls sample) pairs.
pub struct MarkerSet {
    pub grid: Vec<Sample<f64>>,
    pub cls: Vec<Sample<f64>>,
}

pub fn marker_pattern(d: usize) -> Vec<f64> {
    (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt()).collect()
}

pub fn marker_set(n: usize, side: usize, d: usize, amplitude: f64, seed: u64, mask_scale: usize) -> MarkerSet {
    let mut r = rng(seed);
    let pattern = marker_pattern(d);
    let mut grid = Vec::with_capacity(n);
    let mut cls = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i % 2 == 0;
        let mut f: Vec<f64> = (0..side * side * d).map(|_| gauss(&mut r)).collect();
        if pos {
            let base = (MARK_Y * side + MARK_X) * d;
            for j in 0..d {
                f[base + j] += amplitude * pattern[j];
            }
        }
        let mut c = vec![0.0; d];
        for p in 0..side * side {
            for j in 0..d {
                c[j] += f[p * d + j] / (side * side) as f64;
            }
        }
        c.iter_mut().for_each(|v| *v += gauss(&mut r));
        let mut s = Sample::grid(f, side, side).with_target(Target::Binary(pos));
        if mask_scale > 0 {
            let (mh, mw) = (side * mask_scale, side * mask_scale);
            let mut data = vec![0u8; mh * mw];
            if pos {
                for y in MARK_Y * mask_scale..(MARK_Y + 1) * mask_scale {
                    for x in MARK_X * mask_scale..(MARK_X + 1) * mask_scale {
                        data[y * mw + x] = 1;
                    }
                }
            }
            s = s.with_mask(MaskTarget { h: mh, w: mw, data });
        }
        grid.push(s);
        cls.push(Sample::vector(c, Target::Binary(pos)));
    }
    MarkerSet { grid, cls }
}

/// Grids whose mask is channel 0 thresholded at zero after bilinear
/// upsampling (half-pixel centres, edge clamped) to `scale` times the grid.
pub fn threshold_seg(n: usize, side: usize, d: usize, scale: usize, seed: u64) -> Vec<Sample<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let f: Vec<f64> = (0..side * side * d).map(|_| gauss(&mut r)).collect();
            let ch0: Vec<f64> = (0..side * side).map(|p| f[p * d]).collect();
            let up = bilinear_oracle(&ch0, side, side, side * scale, side * scale);
            let data = up.iter().map(|&v| u8::from(v > 0.0)).collect();
            Sample::grid(f, side, side).with_mask(MaskTarget { h: side * scale, w: side * scale, data })
        })
        .collect()
}

/// Single-channel bilinear resize with align_corners = false semantics.
pub fn bilinear_oracle(x: &[f64], ih: usize, iw: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, inn: usize, out: usize| {
        let s = ((o as f64 + 0.5) * inn as f64 / out as f64 - 0.5).max(0.0);
        let lo = (s.floor() as usize).min(inn - 1);
        let hi = (lo + 1).min(inn - 1);
        (lo, hi, s - lo as f64)
    };
    let mut y = vec![0.0; oh * ow];
    for oy in 0..oh {
        let (y0, y1, fy) = coord(oy, ih, oh);
        for ox in 0..ow {
            let (x0, x1, fx) = coord(ox, iw, ow);
            let top = x[y0 * iw + x0] * (1.0 - fx) + x[y0 * iw + x1] * fx;
            let bot = x[y1 * iw + x0] * (1.0 - fx) + x[y1 * iw + x1] * fx;
            y[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
        }
    }
    y
}

pub fn labels_of(samples: &[Sample<f64>]) -> Vec<bool> {
    samples
        .iter()
        .map(|s| match s.target {
            Some(Target::Binary(b)) => b,
            Some(Target::Class(c)) => c == 1,
            _ => panic!("binary target expected"),
        })
        .collect()
}

/// Writes a binary blob dataset with demographics and study groups to `dir`;
/// returns (bundle, manifest) paths.
pub fn write_dataset(dir: &std::path::Path, n: usize, d: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    use xrprobe::data::*;
    let mut r = rng(seed);
    let mut records = Vec::new();
    let mut entries = Vec::new();
    for i in 0..n {
        let pos = i % 2 == 0;
        let cls: Vec<f32> = (0..d).map(|_| (gauss(&mut r) + if pos { 0.8 } else { -0.8 }) as f32).collect();
        let id = format!("img{i:04}");
        records.push(EmbeddingRecord { image_id: id.clone(), cls, patches: None });
        let split = match i % 10 {
            0..=5 => Split::Train,
            6 | 7 => Split::Val,
            _ => Split::Test,
        };
        entries.push(ManifestEntry {
            image_id: id,
            label: LabelValue::Binary(u8::from(pos)),
            split,
            sex: Some(if i / 2 % 2 == 0 { Sex::M } else { Sex::F }),
            age_years: Some([25.0, 50.0, 75.0][i / 4 % 3]),
            group_id: Some(format!("study{}", i / 20 * 2 + i % 2)),
            mask: None,
        });
    }
    let bundle = dir.join("blobs.xremb");
    let manifest = dir.join("manifest.json");
    write_bundle(&bundle, &EmbeddingBundle::from_records(records).unwrap()).unwrap();
    DatasetManifest::new(LabelKind::Binary, 2, entries).save(&manifest).unwrap();
    (bundle, manifest)
}

/// Precision@k without sorting: a candidate is in the top k iff fewer than k
/// candidates beat it (higher cosine, or equal cosine and smaller id).
pub fn oracle_precision(queries: &[(Vec<f64>, usize)], cands: &[(String, Vec<f64>, usize)], k: usize) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let mut total = 0.0;
    for (q, ql) in queries {
        let s: Vec<f64> = cands.iter().map(|c| cos(q, &c.1)).collect();
        let mut hits = 0;
        for i in 0..cands.len() {
            let ahead = (0..cands.len()).filter(|&j| s[j] > s[i] || (s[j] == s[i] && cands[j].0 < cands[i].0)).count();
            if ahead < k && cands[i].2 == *ql {
                hits += 1;
            }
        }
        total += hits as f64 / k as f64;
    }
    total / queries.len() as f64
}

pub struct Task {
    pub bundle: EmbeddingBundle,
    pub labels: HashMap<String, LabelValue>,
    pub task: RetrievalTask,
    pub queries: Vec<(Vec<f64>, usize)>,
    pub cands: Vec<(String, Vec<f64>, usize)>,
}

/// Small-integer coordinates so exact score ties are common.
pub fn random_task(seed: u64, gaussian: bool, nq: usize, nc: usize, classes: usize, d: usize) -> Task {
    let mut r = rng(seed);
    let vector = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> =
                (0..d).map(|_| if gaussian { gauss(r) } else { f64::from(r.random_range(-2i32..=2)) }).collect();
            if v.iter().any(|&x| x != 0.0) {
                return v;
            }
        }
    };
    let mut records = Vec::new();
    let mut labels = HashMap::new();
    let mut queries = Vec::new();
    let mut cands = Vec::new();
    // candidate ids are stored out of id order so the tie rule matters
    let mut cand_order: Vec<usize> = (0..nc).collect();
    cand_order.reverse();
    for q in 0..nq {
        let (v, l) = (vector(&mut r), r.random_range(0..classes));
        let id = format!("q{q:03}");
        records.push(EmbeddingRecord { image_id: id.clone(), cls: v.iter().map(|&x| x as f32).collect(), patches: None });
        labels.insert(id, LabelValue::Multiclass(l));
        queries.push((v, l));
    }
    for c in cand_order {
        let (v, l) = (vector(&mut r), if gaussian { c % classes } else { r.random_range(0..classes) });
        let id = format!("c{c:04}");
        records.push(EmbeddingRecord { image_id: id.clone(), cls: v.iter().map(|&x| x as f32).collect(), patches: None });
        labels.insert(id.clone(), LabelValue::Multiclass(l));
        // the oracle sees the same f32-rounded vectors as the engine
        cands.push((id, v.iter().map(|&x| f64::from(x as f32)).collect(), l));
    }
    let queries = queries.into_iter().map(|(v, l)| (v.iter().map(|&x| f64::from(x as f32)).collect(), l)).collect();
    let task = RetrievalTask {
        query_ids: (0..nq).map(|q| format!("q{q:03}")).collect(),
        candidate_ids: cands.iter().map(|c| c.0.clone()).collect(),
        k_values: Vec::new(),
    };
    Task { bundle: EmbeddingBundle::from_records(records).unwrap(), labels, task, queries, cands }
}

/// Every interleaving of n a-values and m b-values, as the positions of the a's.
pub fn interleavings(n: usize, m: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let total = n + m;
    (0u32..1 << total)
        .filter(|bits| bits.count_ones() as usize == n)
        .map(|bits| {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in 0..total {
                if bits >> i & 1 == 1 { a.push(i as f64) } else { b.push(i as f64) }
            }
            (a, b)
        })
        .collect()
}

pub fn toks(texts: &[&str]) -> Vec<Vec<String>> {
    texts.iter().map(|t| tokenize(t)).collect()
}

pub const GOLDEN: [(&str, &[&str]); 10] = [
    ("The heart size is normal.", &["The heart size is normal."]),
    ("No acute cardiopulmonary process.", &["No acute cardiopulmonary abnormality."]),
    ("Lungs are clear.", &["The lungs are clear bilaterally."]),
    ("Mild cardiomegaly is present.", &["There is mild cardiomegaly."]),
    ("Small left pleural effusion.", &["Small left pleural effusion is seen.", "Left pleural effusion."]),
    ("No pneumothorax.", &["No pneumothorax or effusion."]),
    ("Degenerative changes of the spine.", &["Degenerative changes in the thoracic spine."]),
    ("The lungs are clear.", &["Lungs clear."]),
    ("Endotracheal tube in good position.", &["Endotracheal tube terminates above the carina."]),
    ("Stable chest radiograph.", &["No interval change."]),
];

pub fn golden() -> (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) {
    let c = GOLDEN.iter().map(|(c, _)| tokenize(c)).collect();
    let r = GOLDEN.iter().map(|(_, rs)| toks(rs)).collect();
    (c, r)
}

/// Hand-traced clipped matches / totals per order, candidate length 39 and
/// closest reference length 42.
pub fn golden_bleu(n: usize) -> f64 {
    let matched: [f64; 4] = [28.0, 15.0, 7.0, 3.0];
    let total = [39.0, 29.0, 19.0, 10.0];
    let bp = (1.0f64 - 42.0 / 39.0).exp();
    let log_mean = (0..n).map(|i| (matched[i] / total[i]).ln()).sum::<f64>() / n as f64;
    bp * log_mean.exp()
}
