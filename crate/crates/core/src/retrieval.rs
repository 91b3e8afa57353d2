//! Cosine-similarity image retrieval and Precision@k.
//!
//! Ranking is exact brute force. Scores sort descending; exactly equal scores
//! are ordered by ascending candidate id, then by storage position.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EmbeddingBundle, LabelValue};
use crate::scalar::{dot_f64, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("embedding {0:?} has zero norm")]
    DegenerateEmbedding(String),
    #[error("embedding {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("id {0:?} is not in the bundle or has no label")]
    UnknownId(String),
    #[error("id {0:?} is both a query and a candidate")]
    Overlap(String),
    #[error("k = {k} exceeds the {candidates} candidates")]
    KTooLarge { k: usize, candidates: usize },
    #[error("{0}")]
    Invalid(String),
}

/// A vector tagged with the id used for tie-breaking and error messages.
#[derive(Debug, Clone, Copy)]
pub struct Embedded<'a, S> {
    pub id: &'a str,
    pub vector: &'a [S],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    /// Position of the candidate in the input slice.
    pub index: usize,
    pub score: f64,
}

fn norm_of<S: Scalar>(e: &Embedded<'_, S>) -> Result<f64, RetrievalError> {
    let n = dot_f64(e.vector, e.vector).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(RetrievalError::DegenerateEmbedding(e.id.to_owned()));
    }
    Ok(n)
}

/// Ranks `candidates` by cosine similarity to `query`.
pub fn cosine_rank<S: Scalar>(
    query: Embedded<'_, S>,
    candidates: &[Embedded<'_, S>],
) -> Result<Vec<Ranked>, RetrievalError> {
    let qn = norm_of(&query)?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for (index, c) in candidates.iter().enumerate() {
        if c.vector.len() != query.vector.len() {
            return Err(RetrievalError::DimensionMismatch {
                id: c.id.to_owned(),
                expected: query.vector.len(),
                found: c.vector.len(),
            });
        }
        let cn = norm_of(c)?;
        // + 0.0 folds -0.0 into 0.0 so orthogonal candidates tie under total_cmp
        ranked.push(Ranked { index, score: dot_f64(query.vector, c.vector) / (qn * cn) + 0.0 });
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| candidates[a.index].id.cmp(candidates[b.index].id))
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

/// Mean over queries of the fraction of relevant items among the top `k`.
///
/// `relevant[q][i]` says whether the `i`-th ranked item of query `q` is relevant.
pub fn precision_at_k_from_relevance(relevant: &[Vec<bool>], k: usize) -> Result<f64, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::Invalid("k must be positive".into()));
    }
    if relevant.is_empty() {
        return Err(RetrievalError::Invalid("no queries".into()));
    }
    let mut total = 0.0;
    for row in relevant {
        if k > row.len() {
            return Err(RetrievalError::KTooLarge { k, candidates: row.len() });
        }
        total += row[..k].iter().filter(|&&r| r).count() as f64 / k as f64;
    }
    Ok(total / relevant.len() as f64)
}

/// Query/candidate id lists plus the cut-offs to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTask {
    pub query_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    #[serde(default)]
    pub k_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: usize,
    pub candidates: usize,
    /// Precision@k keyed by k.
    pub precision: BTreeMap<usize, f64>,
}

impl RetrievalTask {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.query_ids.is_empty() || self.candidate_ids.is_empty() {
            return Err(RetrievalError::Invalid("queries and candidates must be non-empty".into()));
        }
        let queries: HashSet<&str> = self.query_ids.iter().map(String::as_str).collect();
        if let Some(c) = self.candidate_ids.iter().find(|c| queries.contains(c.as_str())) {
            return Err(RetrievalError::Overlap(c.clone()));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k > self.candidate_ids.len()) {
            return Err(RetrievalError::KTooLarge { k, candidates: self.candidate_ids.len() });
        }
        Ok(())
    }

    /// Relevance rows in rank order: candidate label equals query label.
    pub fn relevance(
        &self,
        bundle: &EmbeddingBundle,
        labels: &HashMap<String, LabelValue>,
    ) -> Result<Vec<Vec<bool>>, RetrievalError> {
        self.validate()?;
        let lookup = |id: &String| -> Result<(&[f32], &LabelValue), RetrievalError> {
            let rec = bundle.get(id).ok_or_else(|| RetrievalError::UnknownId(id.clone()))?;
            let label = labels.get(id).ok_or_else(|| RetrievalError::UnknownId(id.clone()))?;
            Ok((&rec.cls, label))
        };
        let mut candidates = Vec::with_capacity(self.candidate_ids.len());
        let mut cand_labels = Vec::with_capacity(self.candidate_ids.len());
        for id in &self.candidate_ids {
            let (v, l) = lookup(id)?;
            candidates.push(Embedded { id: id.as_str(), vector: v });
            cand_labels.push(l);
        }
        self.query_ids
            .par_iter()
            .map(|qid| {
                let (qv, ql) = lookup(qid)?;
                let ranked = cosine_rank(Embedded { id: qid, vector: qv }, &candidates)?;
                Ok(ranked.iter().map(|r| cand_labels[r.index] == ql).collect())
            })
            .collect()
    }

    pub fn precision_at_k(
        &self,
        bundle: &EmbeddingBundle,
        labels: &HashMap<String, LabelValue>,
        k: usize,
    ) -> Result<f64, RetrievalError> {
        precision_at_k_from_relevance(&self.relevance(bundle, labels)?, k)
    }

    pub fn evaluate(
        &self,
        bundle: &EmbeddingBundle,
        labels: &HashMap<String, LabelValue>,
    ) -> Result<RetrievalReport, RetrievalError> {
        let rows = self.relevance(bundle, labels)?;
        let mut precision = BTreeMap::new();
        for &k in &self.k_values {
            precision.insert(k, precision_at_k_from_relevance(&rows, k)?);
        }
        Ok(RetrievalReport { queries: self.query_ids.len(), candidates: self.candidate_ids.len(), precision })
    }
}
