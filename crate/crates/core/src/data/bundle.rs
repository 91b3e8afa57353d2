//! Embedding bundle wire format.
//!
//! ```text
//! magic   "XREMB\0"            6 bytes
//! version u16 LE = 1
//! flags   u16 LE               bit0: patch grids present
//! d       u32 LE               embedding dimension
//! records until EOF:
//!   id_len u16 LE, id (UTF-8)
//!   cls    d x f32 LE
//!   if bit0: h u16 LE, w u16 LE, h*w*d x f32 LE (row-major, channels last)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::DataError;

pub const BUNDLE_MAGIC: &[u8; 6] = b"XREMB\0";
pub const BUNDLE_VERSION: u16 = 1;
const FLAG_PATCHES: u16 = 1;

/// Patch-grid embeddings of one image, stored row-major with channels last.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub data: Vec<f32>,
}

impl PatchGrid {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if h == 0 || w == 0 {
            return Err(DataError::Invalid(format!("patch grid must be non-empty, got {h}x{w}")));
        }
        if data.len() != h * w * d {
            return Err(DataError::Invalid(format!(
                "patch grid {h}x{w}x{d} needs {} values, got {}",
                h * w * d,
                data.len()
            )));
        }
        Ok(Self { h, w, d, data })
    }

    pub fn patch(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.w + x) * self.d;
        &self.data[start..start + self.d]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub cls: Vec<f32>,
    pub patches: Option<PatchGrid>,
}

/// All records of one bundle file, indexed by image id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingBundle {
    dim: usize,
    has_patches: bool,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingBundle {
    /// Builds a bundle, enforcing the per-file invariants.
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, DataError> {
        let dim = records.first().map_or(0, |r| r.cls.len());
        let has_patches = records.first().is_some_and(|r| r.patches.is_some());
        if records.is_empty() {
            return Ok(Self::default());
        }
        if dim == 0 {
            return Err(DataError::DimensionMismatch { record: 0, expected: 1, found: 0 });
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.cls.len() != dim {
                return Err(DataError::DimensionMismatch { record: i, expected: dim, found: r.cls.len() });
            }
            match (&r.patches, has_patches) {
                (Some(g), true) => {
                    if g.d != dim || g.data.len() != g.h * g.w * g.d || g.h == 0 || g.w == 0 {
                        return Err(DataError::DimensionMismatch { record: i, expected: dim, found: g.d });
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(DataError::Invalid(format!(
                        "record {i} ({}): patch grids must be present on all records or none",
                        r.image_id
                    )))
                }
            }
            if index.insert(r.image_id.clone(), i).is_some() {
                return Err(DataError::DuplicateId { record: i, id: r.image_id.clone() });
            }
        }
        Ok(Self { dim, has_patches, records, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_patches(&self) -> bool {
        self.has_patches
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DataError> {
        if self.dim == 0 {
            return Err(DataError::Invalid("cannot encode a bundle without a dimension".into()));
        }
        let mut out = Vec::with_capacity(16 + self.records.len() * (self.dim * 4 + 16));
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        let flags = if self.has_patches { FLAG_PATCHES } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, r) in self.records.iter().enumerate() {
            let id = r.image_id.as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| DataError::Invalid(format!("record {i}: image id longer than 65535 bytes")))?;
            out.extend_from_slice(&id_len.to_le_bytes());
            out.extend_from_slice(id);
            r.cls.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            if let Some(g) = &r.patches {
                let (h, w) = match (u16::try_from(g.h), u16::try_from(g.w)) {
                    (Ok(h), Ok(w)) => (h, w),
                    _ => return Err(DataError::Invalid(format!("record {i}: patch grid exceeds u16 extents"))),
                };
                out.extend_from_slice(&h.to_le_bytes());
                out.extend_from_slice(&w.to_le_bytes());
                g.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < 14 || &bytes[..6] != BUNDLE_MAGIC {
            return Err(DataError::MalformedHeader("missing XREMB magic".into()));
        }
        let version = u16::from_le_bytes([bytes[6], bytes[7]]);
        if version != BUNDLE_VERSION {
            return Err(DataError::MalformedHeader(format!("unsupported version {version}")));
        }
        let flags = u16::from_le_bytes([bytes[8], bytes[9]]);
        if flags & !FLAG_PATCHES != 0 {
            return Err(DataError::MalformedHeader(format!("unknown flag bits {flags:#06x}")));
        }
        let dim = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
        if dim == 0 {
            return Err(DataError::MalformedHeader("embedding dimension is zero".into()));
        }
        let has_patches = flags & FLAG_PATCHES != 0;

        let mut cursor = Cursor { bytes, pos: 14 };
        let mut records = Vec::new();
        while cursor.pos < bytes.len() {
            let i = records.len();
            let id_len = cursor.u16(i)? as usize;
            let id = std::str::from_utf8(cursor.take(id_len, i)?)
                .map_err(|_| DataError::Truncated { record: i, reason: "image id is not UTF-8".into() })?
                .to_owned();
            let cls = cursor.f32s(dim, i)?;
            let patches = if has_patches {
                let h = cursor.u16(i)? as usize;
                let w = cursor.u16(i)? as usize;
                if h == 0 || w == 0 {
                    return Err(DataError::Truncated { record: i, reason: format!("empty patch grid {h}x{w}") });
                }
                Some(PatchGrid { h, w, d: dim, data: cursor.f32s(h * w * dim, i)? })
            } else {
                None
            };
            records.push(EmbeddingRecord { image_id: id, cls, patches });
        }
        let mut bundle = Self::from_records(records)?;
        // An empty file body still carries the header's dimension.
        bundle.dim = dim;
        bundle.has_patches = has_patches;
        Ok(bundle)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, record: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DataError::Truncated { record, reason: format!("needed {n} bytes at offset {}", self.pos) }
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self, record: usize) -> Result<u16, DataError> {
        let b = self.take(2, record)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn f32s(&mut self, n: usize, record: usize) -> Result<Vec<f32>, DataError> {
        let raw = self.take(n * 4, record)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<EmbeddingBundle, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
    EmbeddingBundle::from_bytes(&bytes)
}

pub fn write_bundle(path: impl AsRef<Path>, bundle: &EmbeddingBundle) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, bundle.to_bytes()?).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
}
