//! 8-bit PGM (P5) mask rasters. Pixel values are class indices.

use std::fs;
use std::path::Path;

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, DataError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(DataError::Invalid(format!(
                "mask {width}x{height} needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn max_class(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, DataError> {
        let bad = |m: &str| DataError::Invalid(format!("PGM: {m}"));
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("expected P5 magic"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit rasters are supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height;
        if bytes.len() < pos + need {
            return Err(bad("raster shorter than header dimensions"));
        }
        Self::new(width, height, bytes[pos..pos + need].to_vec())
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
    Mask::from_pgm(&bytes)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, mask.to_pgm()).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
}
