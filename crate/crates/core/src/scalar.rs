//! Scalar abstraction shared by the numeric modules.
//!
//! Training, PCA and the geometric metrics are written once against
//! [`Scalar`] and instantiated for `f32` (production parameters) and `f64`
//! (finite-difference shadows and oracles).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type usable by every numeric routine in the crate.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Tag written into serialized parameter blobs.
    const DTYPE: &'static str;
    /// Width of one little-endian element in bytes.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Converts an `f64` literal. Every finite `f64` has a nearest `f32`, so this never fails.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Sum of a sequence accumulated in `f64`.
pub fn sum_f64<S: Scalar>(values: impl IntoIterator<Item = S>) -> f64 {
    values.into_iter().map(Scalar::as_f64).sum()
}

/// Dot product accumulated in `f64`.
pub fn dot_f64<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum()
}
