//! Corpus metrics for generated report text: BLEU-1..4, ROUGE-L and CIDEr.
//!
//! Tokenization (shared by all three): lowercase the text, replace every
//! character that is neither alphanumeric nor whitespace with a space, then
//! split on whitespace.

use std::collections::{HashMap, HashSet};

use super::MetricError;

pub type Tokens = Vec<String>;

pub fn tokenize(text: &str) -> Tokens {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn check_pairs<T>(candidates: &[Tokens], references: &[T]) -> Result<(), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::Invalid(format!(
            "{} candidates vs {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(MetricError::Undefined("empty corpus".into()));
    }
    Ok(())
}

/// Corpus BLEU with uniform weights over orders `1..=max_n`, clipped counts,
/// closest-reference length and no smoothing.
pub fn bleu(candidates: &[Tokens], references: &[Vec<Tokens>], max_n: usize) -> Result<f64, MetricError> {
    check_pairs(candidates, references)?;
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::Invalid(format!("BLEU order {max_n} outside 1..=4")));
    }
    if references.iter().any(Vec::is_empty) {
        return Err(MetricError::Invalid("every candidate needs a reference".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("non-empty reference set");
        for n in 1..=max_n {
            let cand_counts = ngram_counts(cand, n);
            let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &count) in &cand_counts {
                let max_ref = ref_counts.iter().map(|rc| rc.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                matched[n - 1] += count.min(max_ref);
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        if matched[n] == 0 || total[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln() / max_n as f64;
    }
    let brevity = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    Ok(brevity * log_sum.exp())
}

pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure of one candidate against its references (β = 1.2).
///
/// Precision and recall are each maximized over references before combining.
pub fn rouge_l(candidate: &[String], references: &[Tokens]) -> f64 {
    let (mut p_max, mut r_max) = (0.0f64, 0.0f64);
    for r in references {
        if candidate.is_empty() || r.is_empty() {
            continue;
        }
        let lcs = lcs_len(candidate, r) as f64;
        p_max = p_max.max(lcs / candidate.len() as f64);
        r_max = r_max.max(lcs / r.len() as f64);
    }
    if p_max == 0.0 || r_max == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p_max * r_max / (r_max + b2 * p_max)
}

/// Mean ROUGE-L over candidate/reference pairs.
pub fn rouge_l_corpus(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64, MetricError> {
    check_pairs(candidates, references)?;
    Ok(candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r)).sum::<f64>() / candidates.len() as f64)
}

pub const CIDER_MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScore {
    pub corpus: f64,
    pub per_candidate: Vec<f64>,
}

/// Plain CIDEr (no length penalty, no clipping), scaled by 10.
///
/// Document frequencies count the reference sets containing an n-gram; the
/// idf is `ln(N) - ln(max(1, df))` with `N` reference sets. A one-set corpus
/// has zero idf everywhere, and a zero vector has cosine 0 with anything.
pub fn cider(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<CiderScore, MetricError> {
    check_pairs(candidates, references)?;
    let docs = references.len() as f64;
    let mut df: Vec<HashMap<&[String], usize>> = vec![HashMap::new(); CIDER_MAX_N];
    for refs in references {
        for n in 1..=CIDER_MAX_N {
            let seen: HashSet<&[String]> = refs.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            for g in seen {
                *df[n - 1].entry(g).or_insert(0) += 1;
            }
        }
    }
    let log_docs = docs.ln();
    let tfidf = |tokens: &[String], n: usize| -> (HashMap<Vec<String>, f64>, f64) {
        let mut vec = HashMap::new();
        let mut norm = 0.0;
        for (g, count) in ngram_counts(tokens, n) {
            let d = df[n - 1].get(g).copied().unwrap_or(0).max(1) as f64;
            let v = count as f64 * (log_docs - d.ln());
            norm += v * v;
            vec.insert(g.to_vec(), v);
        }
        (vec, norm.sqrt())
    };

    let mut per_candidate = Vec::with_capacity(candidates.len());
    for (cand, refs) in candidates.iter().zip(references) {
        let mut score = 0.0;
        for r in refs {
            let mut per_n = 0.0;
            for n in 1..=CIDER_MAX_N {
                let (hv, hn) = tfidf(cand, n);
                let (rv, rn) = tfidf(r, n);
                if hn == 0.0 || rn == 0.0 {
                    continue;
                }
                let dot: f64 = hv.iter().map(|(g, v)| v * rv.get(g).copied().unwrap_or(0.0)).sum();
                per_n += dot / (hn * rn);
            }
            score += per_n / CIDER_MAX_N as f64;
        }
        let s = if refs.is_empty() { 0.0 } else { 10.0 * score / refs.len() as f64 };
        per_candidate.push(s);
    }
    let corpus = per_candidate.iter().sum::<f64>() / per_candidate.len() as f64;
    Ok(CiderScore { corpus, per_candidate })
}
