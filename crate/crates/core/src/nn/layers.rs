//! Dense and 2-D convolution layers over a flat parameter vector.
//!
//! Layers only store offsets; parameters and gradients live in caller-owned
//! flat slices so optimizers and finite-difference checks see one vector.
//! Feature maps are row-major with channels last (`[y][x][c]`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Allocates contiguous parameter ranges and records which receive weight decay.
#[derive(Debug, Default, Clone)]
pub struct ParamLayout {
    decay: Vec<bool>,
}

impl ParamLayout {
    pub fn alloc(&mut self, len: usize, decay: bool) -> usize {
        let offset = self.decay.len();
        self.decay.resize(offset + len, decay);
        offset
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }

    pub fn decay_mask(&self) -> &[bool] {
        &self.decay
    }
}

/// Kaiming-uniform fan-in initialization for ReLU stacks: `U(-b, b)`, `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<S: Scalar>(out: &mut [S], fan_in: usize, rng: &mut impl Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in out {
        *v = S::of(rng.random_range(-bound..bound));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    weight: usize,
    bias: usize,
}

impl Dense {
    pub fn new(layout: &mut ParamLayout, input: usize, output: usize) -> Self {
        let weight = layout.alloc(input * output, true);
        let bias = layout.alloc(output, false);
        Self { input, output, weight, bias }
    }

    pub fn init<S: Scalar>(&self, params: &mut [S], rng: &mut impl Rng) {
        kaiming_uniform(&mut params[self.weight..self.weight + self.input * self.output], self.input, rng);
        params[self.bias..self.bias + self.output].iter_mut().for_each(|b| *b = S::zero());
    }

    fn weights<'a, S>(&self, params: &'a [S]) -> &'a [S] {
        &params[self.weight..self.weight + self.input * self.output]
    }

    pub fn forward<S: Scalar>(&self, params: &[S], x: &[S], y: &mut [S]) {
        let w = self.weights(params);
        let b = &params[self.bias..self.bias + self.output];
        for (o, out) in y.iter_mut().enumerate() {
            let row = &w[o * self.input..(o + 1) * self.input];
            *out = b[o] + row.iter().zip(x).map(|(&a, &c)| a * c).sum::<S>();
        }
    }

    /// Accumulates parameter gradients; writes the input gradient when `dx` is given.
    pub fn backward<S: Scalar>(&self, params: &[S], x: &[S], dy: &[S], grads: &mut [S], dx: Option<&mut [S]>) {
        for (o, &g) in dy.iter().enumerate() {
            grads[self.bias + o] += g;
            let row = &mut grads[self.weight + o * self.input..][..self.input];
            row.iter_mut().zip(x).for_each(|(gwi, &xi)| *gwi += g * xi);
        }
        if let Some(dx) = dx {
            let w = self.weights(params);
            dx.iter_mut().for_each(|v| *v = S::zero());
            for (o, &g) in dy.iter().enumerate() {
                let row = &w[o * self.input..(o + 1) * self.input];
                dx.iter_mut().zip(row).for_each(|(d, &wi)| *d += g * wi);
            }
        }
    }
}

/// Square-kernel convolution with stride 1 and "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    weight: usize,
    bias: usize,
}

impl Conv2d {
    /// `kernel` must be odd so that padding `kernel / 2` preserves the grid extent.
    pub fn new(layout: &mut ParamLayout, input: usize, output: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let weight = layout.alloc(output * kernel * kernel * input, true);
        let bias = layout.alloc(output, false);
        Self { input, output, kernel, weight, bias }
    }

    fn weight_len(&self) -> usize {
        self.output * self.kernel * self.kernel * self.input
    }

    pub fn init<S: Scalar>(&self, params: &mut [S], rng: &mut impl Rng) {
        let fan_in = self.kernel * self.kernel * self.input;
        kaiming_uniform(&mut params[self.weight..self.weight + self.weight_len()], fan_in, rng);
        params[self.bias..self.bias + self.output].iter_mut().for_each(|b| *b = S::zero());
    }

    /// Valid (tap index, source pixel) pairs for output pixel `(y, x)`.
    fn taps(&self, h: usize, w: usize, y: usize, x: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = (self.kernel / 2) as isize;
        let k = self.kernel;
        (0..k * k).filter_map(move |tap| {
            let sy = y as isize + (tap / k) as isize - r;
            let sx = x as isize + (tap % k) as isize - r;
            (sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize).then(|| (tap, sy as usize * w + sx as usize))
        })
    }

    pub fn forward<S: Scalar>(&self, params: &[S], x: &[S], h: usize, w: usize, y: &mut [S]) {
        let weights = &params[self.weight..self.weight + self.weight_len()];
        let bias = &params[self.bias..self.bias + self.output];
        let (cin, kk) = (self.input, self.kernel * self.kernel);
        for py in 0..h {
            for px in 0..w {
                let out = &mut y[(py * w + px) * self.output..][..self.output];
                out.copy_from_slice(bias);
                for (tap, src) in self.taps(h, w, py, px) {
                    let xs = &x[src * cin..(src + 1) * cin];
                    for (o, acc) in out.iter_mut().enumerate() {
                        let wr = &weights[(o * kk + tap) * cin..][..cin];
                        *acc += wr.iter().zip(xs).map(|(&a, &b)| a * b).sum::<S>();
                    }
                }
            }
        }
    }

    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        x: &[S],
        h: usize,
        w: usize,
        dy: &[S],
        grads: &mut [S],
        mut dx: Option<&mut [S]>,
    ) {
        let weights = &params[self.weight..self.weight + self.weight_len()];
        let (cin, kk) = (self.input, self.kernel * self.kernel);
        if let Some(dx) = dx.as_deref_mut() {
            dx.iter_mut().for_each(|v| *v = S::zero());
        }
        for py in 0..h {
            for px in 0..w {
                let g_out = &dy[(py * w + px) * self.output..][..self.output];
                for (o, &g) in g_out.iter().enumerate() {
                    grads[self.bias + o] += g;
                }
                for (tap, src) in self.taps(h, w, py, px) {
                    let xs = &x[src * cin..(src + 1) * cin];
                    for (o, &g) in g_out.iter().enumerate() {
                        let base = (o * kk + tap) * cin;
                        let gw = &mut grads[self.weight + base..self.weight + base + cin];
                        gw.iter_mut().zip(xs).for_each(|(a, &b)| *a += g * b);
                        if let Some(dx) = dx.as_deref_mut() {
                            let wr = &weights[base..base + cin];
                            dx[src * cin..(src + 1) * cin].iter_mut().zip(wr).for_each(|(d, &wv)| *d += g * wv);
                        }
                    }
                }
            }
        }
    }
}

pub fn relu_in_place<S: Scalar>(x: &mut [S]) {
    x.iter_mut().for_each(|v| *v = v.max(S::zero()));
}

/// Zeroes `grad` where the forward activation was clipped.
pub fn relu_backward<S: Scalar>(activation: &[S], grad: &mut [S]) {
    grad.iter_mut().zip(activation).for_each(|(g, &a)| {
        if a <= S::zero() {
            *g = S::zero()
        }
    });
}

/// Channel means over all pixels of a channels-last map.
pub fn global_avg_pool<S: Scalar>(x: &[S], pixels: usize, channels: usize) -> Vec<S> {
    let mut out = vec![S::zero(); channels];
    for px in x.chunks_exact(channels) {
        out.iter_mut().zip(px).for_each(|(o, &v)| *o += v);
    }
    let n = S::of(pixels as f64);
    out.iter_mut().for_each(|o| *o /= n);
    out
}

pub fn global_avg_pool_backward<S: Scalar>(dpooled: &[S], pixels: usize) -> Vec<S> {
    let n = S::of(pixels as f64);
    let per: Vec<S> = dpooled.iter().map(|&g| g / n).collect();
    per.iter().copied().cycle().take(pixels * dpooled.len()).collect()
}
