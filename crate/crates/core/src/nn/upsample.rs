//! Bilinear resize of channels-last maps (half-pixel centers, edge clamped).

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
struct Tap<S> {
    lo: usize,
    hi: usize,
    frac: S,
}

fn taps<S: Scalar>(input: usize, output: usize) -> Vec<Tap<S>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            Tap { lo, hi, frac: S::of(src - lo as f64) }
        })
        .collect()
}

/// Precomputed interpolation weights for one `(in_h, in_w) -> (out_h, out_w)` resize.
#[derive(Debug, Clone)]
pub struct Bilinear<S> {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    rows: Vec<Tap<S>>,
    cols: Vec<Tap<S>>,
}

impl<S: Scalar> Bilinear<S> {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        Self { in_h, in_w, out_h, out_w, rows: taps(in_h, out_h), cols: taps(in_w, out_w) }
    }

    fn corners(&self, oy: usize, ox: usize) -> [(usize, S); 4] {
        let (r, c) = (self.rows[oy], self.cols[ox]);
        let one = S::one();
        [
            (r.lo * self.in_w + c.lo, (one - r.frac) * (one - c.frac)),
            (r.lo * self.in_w + c.hi, (one - r.frac) * c.frac),
            (r.hi * self.in_w + c.lo, r.frac * (one - c.frac)),
            (r.hi * self.in_w + c.hi, r.frac * c.frac),
        ]
    }

    pub fn forward(&self, x: &[S], channels: usize) -> Vec<S> {
        let mut out = vec![S::zero(); self.out_h * self.out_w * channels];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let dst = &mut out[(oy * self.out_w + ox) * channels..][..channels];
                for (src, wgt) in self.corners(oy, ox) {
                    let xs = &x[src * channels..][..channels];
                    dst.iter_mut().zip(xs).for_each(|(d, &v)| *d += wgt * v);
                }
            }
        }
        out
    }

    pub fn backward(&self, dy: &[S], channels: usize) -> Vec<S> {
        let mut dx = vec![S::zero(); self.in_h * self.in_w * channels];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let g = &dy[(oy * self.out_w + ox) * channels..][..channels];
                for (src, wgt) in self.corners(oy, ox) {
                    dx[src * channels..][..channels].iter_mut().zip(g).for_each(|(d, &v)| *d += wgt * v);
                }
            }
        }
        dx
    }
}
