//! Versioned probe files: magic, version, JSON descriptor, little-endian parameters.
//!
//! Layout: `XRPRB\0`, version u16 = 1, descriptor length u32, descriptor JSON,
//! then `param_count` values of the descriptor's dtype.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::any::AnyModel;
use super::config::Architecture;
use super::model::ProbeModel;
use super::trainer::{StopReason, TrainedProbe};
use super::TrainError;
use crate::data::DataError;
use crate::scalar::Scalar;

pub const PROBE_MAGIC: &[u8; 6] = b"XRPRB\0";
pub const PROBE_VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    dtype: String,
    param_count: usize,
    best_epoch: usize,
    best_score: f64,
    val_trace: Vec<f64>,
    lr_trace: Vec<f64>,
    epochs_run: usize,
    iterations: usize,
    stop_reason: StopReason,
}

fn invalid(msg: impl Into<String>) -> TrainError {
    TrainError::Data(DataError::Invalid(msg.into()))
}

pub fn probe_to_bytes<S: Scalar>(probe: &TrainedProbe<S>) -> Result<Vec<u8>, TrainError> {
    let desc = Descriptor {
        architecture: probe.architecture.clone(),
        dtype: S::DTYPE.to_string(),
        param_count: probe.params.len(),
        best_epoch: probe.best_epoch,
        best_score: probe.best_score,
        val_trace: probe.val_trace.clone(),
        lr_trace: probe.lr_trace.clone(),
        epochs_run: probe.epochs_run,
        iterations: probe.iterations,
        stop_reason: probe.stop_reason,
    };
    let json = serde_json::to_vec(&desc).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + probe.params.len() * S::BYTES);
    out.extend_from_slice(PROBE_MAGIC);
    out.extend_from_slice(&PROBE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    probe.params.iter().for_each(|p| p.write_le(&mut out));
    Ok(out)
}

/// Parses a probe file, converting parameters to `S` if stored in the other
/// precision. The parameter count must match the architecture exactly.
pub fn probe_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<TrainedProbe<S>, TrainError> {
    if bytes.len() < 12 || &bytes[..6] != PROBE_MAGIC {
        return Err(invalid("not a probe file"));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != PROBE_VERSION {
        return Err(invalid(format!("unsupported probe version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| invalid("truncated descriptor"))?;
    let desc: Descriptor = serde_json::from_slice(body).map_err(|e| invalid(format!("descriptor: {e}")))?;
    let expected = ProbeModel::<S>::param_count(&AnyModel::from_architecture(&desc.architecture)?);
    if desc.param_count != expected {
        return Err(invalid(format!("{} parameters stored, architecture needs {expected}", desc.param_count)));
    }
    let blob = &bytes[12 + len..];
    let params: Vec<S> = match desc.dtype.as_str() {
        "f32" => decode::<f32, S>(blob, expected)?,
        "f64" => decode::<f64, S>(blob, expected)?,
        other => return Err(invalid(format!("unknown dtype {other}"))),
    };
    Ok(TrainedProbe {
        architecture: desc.architecture,
        params,
        best_epoch: desc.best_epoch,
        best_score: desc.best_score,
        val_trace: desc.val_trace,
        lr_trace: desc.lr_trace,
        epochs_run: desc.epochs_run,
        iterations: desc.iterations,
        stop_reason: desc.stop_reason,
    })
}

fn decode<F: Scalar, S: Scalar>(blob: &[u8], count: usize) -> Result<Vec<S>, TrainError> {
    if blob.len() != count * F::BYTES {
        return Err(invalid(format!("parameter blob has {} bytes, expected {}", blob.len(), count * F::BYTES)));
    }
    Ok(blob.chunks_exact(F::BYTES).map(|c| S::of(F::read_le(c).as_f64())).collect())
}

pub fn save_probe<S: Scalar>(path: impl AsRef<Path>, probe: &TrainedProbe<S>) -> Result<(), TrainError> {
    let path = path.as_ref();
    std::fs::write(path, probe_to_bytes(probe)?)
        .map_err(|source| TrainError::Data(DataError::Io { path: path.display().to_string(), source }))
}

pub fn load_probe<S: Scalar>(path: impl AsRef<Path>) -> Result<TrainedProbe<S>, TrainError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|source| TrainError::Data(DataError::Io { path: path.display().to_string(), source }))?;
    probe_from_bytes(&bytes)
}
