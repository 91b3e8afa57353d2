//! PCA of patch embeddings by power iteration with deflation, plus per-patch
//! component maps rendered as PPM images.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PatchGrid;
use crate::rng::{keyed, normal, stream};
use crate::scalar::Scalar;

pub const PCA_TOL: f64 = 1e-8;
pub const PCA_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("k = {k} exceeds min(n, d) = {max}")]
    BadK { k: usize, max: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("component {component} did not converge; residual {residual:e}")]
    NotConverged { component: usize, residual: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows of length `d`, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues (denominator `n - 1`).
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Component scores of one row.
    pub fn transform<S: Scalar>(&self, row: &[S]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((&ci, &x), &m)| ci * (x.as_f64() - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &s) in self.components.iter().zip(scores) {
            out.iter_mut().zip(c).for_each(|(o, &ci)| *o += s * ci);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, &bi)| *x -= p * bi);
    }
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sample covariance (denominator `n - 1`) of the rows, with their mean.
pub fn covariance<S: Scalar>(rows: &[&[S]]) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (rows.len(), rows[0].len());
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r.iter()).for_each(|(m, &x)| *m += x.as_f64());
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in rows {
        centered.iter_mut().zip(r.iter()).zip(&mean).for_each(|((c, &x), &m)| *c = x.as_f64() - m);
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

fn matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * d..(i + 1) * d], v);
    }
}

/// Top-`k` principal components of the rows.
///
/// Each component is found by power iteration on the deflated covariance,
/// re-orthogonalised against earlier components every step, until the
/// residual `|C v - lambda v|` falls below `PCA_TOL * trace(C)`.
pub fn pca_fit<S: Scalar>(rows: &[&[S]], k: usize) -> Result<PcaModel, PcaError> {
    let n = rows.len();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    let d = rows[0].len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(PcaError::DimensionMismatch { row, expected: d, found: r.len() });
    }
    if k > n.min(d) {
        return Err(PcaError::BadK { k, max: n.min(d) });
    }
    let (mean, cov) = covariance(rows);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let scale = if trace > 0.0 { trace } else { 1.0 };
    let mut deflated = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut w = vec![0.0; d];

    for c in 0..k {
        let mut rng = keyed(0, stream::INIT, c as u64);
        let mut v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut residual = f64::INFINITY;
        for _ in 0..PCA_MAX_ITERS {
            matvec(&deflated, &v, &mut w);
            let lambda = dot(&v, &w);
            residual = w.iter().zip(&v).map(|(wi, vi)| (wi - lambda * vi).powi(2)).sum::<f64>().sqrt();
            if residual <= PCA_TOL * scale {
                break;
            }
            orthogonalize(&mut w, &components);
            if normalize(&mut w) == 0.0 {
                residual = 0.0;
                break;
            }
            std::mem::swap(&mut v, &mut w);
        }
        if residual > PCA_TOL * scale {
            return Err(PcaError::NotConverged { component: c, residual });
        }
        // refine the eigenvalue on the undeflated matrix
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        fix_sign(&mut v);
        matvec(&cov, &v, &mut w);
        let lambda = dot(&v, &w).max(0.0);
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let explained_variance_ratio =
        eigenvalues.iter().map(|&l| if trace > 0.0 { l / trace } else { 0.0 }).collect();
    Ok(PcaModel { mean, components, eigenvalues, explained_variance_ratio })
}

/// Per-patch component scores, each component min-max scaled to `[0, 1]`
/// over the grid (a constant component maps to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentGrid {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    /// Row-major `h * w * k`.
    pub data: Vec<f64>,
}

pub fn project_patch_grid(grid: &PatchGrid, model: &PcaModel, k: usize) -> ComponentGrid {
    let k = k.min(model.components.len()).min(3);
    let trimmed = PcaModel { components: model.components[..k].to_vec(), ..model.clone() };
    let mut data: Vec<f64> = grid.patches().flat_map(|p| trimmed.transform(p)).collect();
    for c in 0..k {
        let (lo, hi) = data
            .iter()
            .skip(c)
            .step_by(k)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let range = hi - lo;
        data.iter_mut().skip(c).step_by(k).for_each(|x| *x = if range > 0.0 { (*x - lo) / range } else { 0.0 });
    }
    ComponentGrid { h: grid.h, w: grid.w, k, data }
}

/// Binary PPM, one pixel per patch; components 0..3 drive R, G, B and
/// missing channels are zero.
pub fn encode_ppm(grid: &ComponentGrid) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", grid.w, grid.h).into_bytes();
    for p in 0..grid.h * grid.w {
        for ch in 0..3 {
            let v = if ch < grid.k { grid.data[p * grid.k + ch] } else { 0.0 };
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn render_component_map(grid: &ComponentGrid, path: impl AsRef<Path>) -> Result<(), PcaError> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(grid)).map_err(|source| PcaError::Io { path: path.display().to_string(), source })
}
