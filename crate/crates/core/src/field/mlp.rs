//! The two small MLP heads and their manual backward pass.
//!
//! Density head: `in -> 64 (relu) -> 16`, where output 0 is the raw density
//! and outputs 1..16 form the geometry feature. Color head:
//! `geometry (15) ++ SH(view) (16) -> 64 (relu) -> 64 (relu) -> 3 (sigmoid)`.

use alloc::vec::Vec;

use rand::Rng;

use super::sh::SH_DIM;
use crate::math::{exp, sigmoid, sqrt};

pub const HIDDEN: usize = 64;
pub const GEO_DIM: usize = 15;
pub const DENSITY_OUT: usize = 1 + GEO_DIM;
pub const COLOR_IN: usize = GEO_DIM + SH_DIM;
/// Widest encoded input the fixed-size sample cache supports.
pub const MAX_INPUT_DIM: usize = 64;
/// Raw density is clamped here before exponentiation.
pub const SIGMA_RAW_MAX: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn end(&self) -> usize {
        self.b + self.rows
    }
}

fn layout(in_dim: usize) -> ([Layer; 5], usize) {
    let shapes = [(HIDDEN, in_dim), (DENSITY_OUT, HIDDEN), (HIDDEN, COLOR_IN), (HIDDEN, HIDDEN), (3, HIDDEN)];
    let mut offset = 0;
    let layers = shapes.map(|(rows, cols)| {
        let l = Layer { rows, cols, w: offset, b: offset + rows * cols };
        offset = l.end();
        l
    });
    (layers, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    in_dim: usize,
    layers: [Layer; 5],
    /// Flat weights and biases, layer by layer. Weights are stored input-major
    /// (`w[input * outputs + output]`), followed by the bias.
    pub params: Vec<f64>,
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct SampleCache {
    pub x: [f64; MAX_INPUT_DIM],
    pub h1: [f64; HIDDEN],
    pub dout: [f64; DENSITY_OUT],
    pub cin: [f64; COLOR_IN],
    pub h2: [f64; HIDDEN],
    pub h3: [f64; HIDDEN],
    pub rgb: [f64; 3],
}

impl Default for SampleCache {
    fn default() -> Self {
        SampleCache {
            x: [0.0; MAX_INPUT_DIM],
            h1: [0.0; HIDDEN],
            dout: [0.0; DENSITY_OUT],
            cin: [0.0; COLOR_IN],
            h2: [0.0; HIDDEN],
            h3: [0.0; HIDDEN],
            rgb: [0.0; 3],
        }
    }
}

impl SampleCache {
    pub fn sigma_raw(&self) -> f64 {
        self.dout[0]
    }

    pub fn sigma(&self) -> f64 {
        density_activation(self.dout[0])
    }
}

#[inline(always)]
pub fn density_activation(raw: f64) -> f64 {
    exp(raw.min(SIGMA_RAW_MAX))
}

/// `sum_i a[i] * b[i]` with eight independent partial sums.
#[inline(always)]
fn dot<const R: usize>(a: &[f64; R], b: &[f64; R]) -> f64 {
    let mut acc = [0.0f64; 8];
    let full = R / 8;
    for c in 0..full {
        for k in 0..8 {
            acc[k] += a[8 * c + k] * b[8 * c + k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in 8 * full..R {
        s += a[i] * b[i];
    }
    s
}

#[inline(always)]
fn as_block<const R: usize>(s: &[f64]) -> &[f64; R] {
    s.try_into().expect("block width")
}

#[inline(always)]
fn as_block_mut<const R: usize>(s: &mut [f64]) -> &mut [f64; R] {
    s.try_into().expect("block width")
}

#[inline(always)]
fn relu_mask<const R: usize>(g: &mut [f64; R], h: &[f64; R]) {
    for r in 0..R {
        if h[r] <= 0.0 {
            g[r] = 0.0;
        }
    }
}

impl MlpParams {
    /// He-uniform weights, zero biases.
    pub fn random(in_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(in_dim >= 1 && in_dim <= MAX_INPUT_DIM, "input width {in_dim} outside 1..={MAX_INPUT_DIM}");
        let (layers, total) = layout(in_dim);
        let mut params = alloc::vec![0.0; total];
        for l in &layers {
            let bound = sqrt(6.0 / l.cols as f64);
            for w in &mut params[l.w..l.b] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        MlpParams { in_dim, layers, params }
    }

    /// Wraps existing parameters; `None` if the length does not match.
    pub fn from_params(in_dim: usize, params: Vec<f64>) -> Option<Self> {
        if in_dim == 0 || in_dim > MAX_INPUT_DIM {
            return None;
        }
        let (layers, total) = layout(in_dim);
        (params.len() == total).then_some(MlpParams { in_dim, layers, params })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    #[inline(always)]
    fn linear<const R: usize>(&self, l: usize, x: &[f64], y: &mut [f64; R]) {
        let layer = self.layers[l];
        debug_assert_eq!((layer.rows, layer.cols), (R, x.len()));
        y.copy_from_slice(&self.params[layer.b..layer.b + R]);
        let w = &self.params[layer.w..layer.b];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let col: &[f64; R] = as_block(&w[j * R..(j + 1) * R]);
                for r in 0..R {
                    y[r] += xj * col[r];
                }
            }
        }
    }

    /// Density only (skips the color head).
    pub fn density(&self, x: &[f64]) -> f64 {
        let mut h1 = [0.0; HIDDEN];
        self.linear(0, x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let layer = self.layers[1];
        let w = &self.params[layer.w..layer.b];
        let mut raw = self.params[layer.b];
        for (j, &h) in h1.iter().enumerate() {
            raw += h * w[j * DENSITY_OUT];
        }
        density_activation(raw)
    }

    /// Full forward pass; fills `cache` and returns `(sigma, rgb)`.
    #[inline]
    pub fn forward(&self, x: &[f64], dir_sh: &[f64; SH_DIM], cache: &mut SampleCache) -> (f64, [f64; 3]) {
        debug_assert_eq!(x.len(), self.in_dim);
        cache.x[..self.in_dim].copy_from_slice(x);
        self.linear(0, x, &mut cache.h1);
        cache.h1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.linear(1, &cache.h1, &mut cache.dout);
        cache.cin[..GEO_DIM].copy_from_slice(&cache.dout[1..]);
        cache.cin[GEO_DIM..].copy_from_slice(dir_sh);
        self.linear(2, &cache.cin, &mut cache.h2);
        cache.h2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.linear(3, &cache.h2, &mut cache.h3);
        cache.h3.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut out = [0.0; 3];
        self.linear(4, &cache.h3, &mut out);
        cache.rgb = out.map(sigmoid);
        (cache.sigma(), cache.rgb)
    }

    #[inline(always)]
    fn linear_backward<const R: usize>(&self, l: usize, x: &[f64], gy: &[f64; R], grads: &mut [f64], gx: Option<&mut [f64]>) {
        let layer = self.layers[l];
        debug_assert_eq!((layer.rows, layer.cols), (R, x.len()));
        let (gw, gb) = grads[layer.w..layer.end()].split_at_mut(R * x.len());
        for r in 0..R {
            gb[r] += gy[r];
        }
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let g: &mut [f64; R] = as_block_mut(&mut gw[j * R..(j + 1) * R]);
                for r in 0..R {
                    g[r] += xj * gy[r];
                }
            }
        }
        if let Some(gx) = gx {
            let w = &self.params[layer.w..layer.b];
            for (j, g) in gx.iter_mut().enumerate() {
                *g = dot(as_block(&w[j * R..(j + 1) * R]), gy);
            }
        }
    }

    /// Backpropagates `d loss / d sigma_raw` and `d loss / d rgb` through one
    /// sample, adding parameter gradients into `grads` and writing
    /// `d loss / d x` into `gx`.
    #[inline]
    pub fn backward(&self, cache: &SampleCache, g_sigma_raw: f64, g_rgb: [f64; 3], grads: &mut [f64], gx: &mut [f64]) {
        let g_out: [f64; 3] = core::array::from_fn(|c| g_rgb[c] * cache.rgb[c] * (1.0 - cache.rgb[c]));
        let mut g_h3 = [0.0; HIDDEN];
        self.linear_backward(4, &cache.h3, &g_out, grads, Some(&mut g_h3));
        relu_mask(&mut g_h3, &cache.h3);
        let mut g_h2 = [0.0; HIDDEN];
        self.linear_backward(3, &cache.h2, &g_h3, grads, Some(&mut g_h2));
        relu_mask(&mut g_h2, &cache.h2);
        let mut g_cin = [0.0; COLOR_IN];
        self.linear_backward(2, &cache.cin, &g_h2, grads, Some(&mut g_cin));
        let mut g_dout = [0.0; DENSITY_OUT];
        g_dout[0] = if cache.dout[0] < SIGMA_RAW_MAX { g_sigma_raw } else { 0.0 };
        g_dout[1..].copy_from_slice(&g_cin[..GEO_DIM]);
        let mut g_h1 = [0.0; HIDDEN];
        self.linear_backward(1, &cache.h1, &g_dout, grads, Some(&mut g_h1));
        relu_mask(&mut g_h1, &cache.h1);
        self.linear_backward(0, &cache.x[..self.in_dim], &g_h1, grads, Some(gx));
    }
}
