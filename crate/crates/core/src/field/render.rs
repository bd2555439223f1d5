//! Emission–absorption compositing and image rendering.
//!
//! Weights are `w_i = T_i (1 - exp(-sigma_i delta_i))` with
//! `T_{i+1} = T_i exp(-sigma_i delta_i)`; whatever transmittance survives
//! the last sample lets the background through.

use alloc::vec::Vec;

use crate::math::{exp, Vec3};
use crate::raytrace::{build_bvh_with_positions, ray_intervals, Ray, RaySampler, SurfaceBvh};
use crate::tetmesh::{Locator, TetLocation, TetMesh};

/// Guards the depth normalization for nearly transparent rays.
pub const DEPTH_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Sample spacing along rays.
    pub step: f64,
    /// Marching stops once transmittance falls below this; `0` disables
    /// early termination.
    pub min_transmittance: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { background: [1.0; 3], step: 3.0 / 512.0, min_transmittance: 1e-4 }
    }
}

impl RenderSettings {
    /// `sqrt(3) / 512` of `diagonal`.
    pub fn step_for_diagonal(diagonal: f64) -> f64 {
        crate::math::sqrt(3.0) / 512.0 * diagonal
    }
}

/// Result of rendering one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOutput {
    pub rgb: [f64; 3],
    pub accumulation: f64,
    pub depth: f64,
    /// Samples that could not be located or sat in inverted tets.
    pub dropped: u32,
}

impl RayOutput {
    pub fn background(bg: [f64; 3]) -> Self {
        RayOutput { rgb: bg, accumulation: 0.0, depth: 0.0, dropped: 0 }
    }
}

/// Running front-to-back compositor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compositor {
    pub transmittance: f64,
    pub rgb: [f64; 3],
    pub accumulation: f64,
    depth_sum: f64,
}

impl Default for Compositor {
    fn default() -> Self {
        Compositor { transmittance: 1.0, rgb: [0.0; 3], accumulation: 0.0, depth_sum: 0.0 }
    }
}

impl Compositor {
    /// Adds one sample and returns its weight.
    #[inline]
    pub fn push(&mut self, sigma: f64, delta: f64, color: [f64; 3], t: f64) -> f64 {
        let decay = exp(-sigma * delta);
        let w = self.transmittance * (1.0 - decay);
        self.transmittance *= decay;
        for c in 0..3 {
            self.rgb[c] += w * color[c];
        }
        self.accumulation += w;
        self.depth_sum += w * t;
        w
    }

    pub fn finish(&self, background: [f64; 3]) -> RayOutput {
        RayOutput {
            rgb: core::array::from_fn(|c| self.rgb[c] + self.transmittance * background[c]),
            accumulation: self.accumulation,
            depth: self.depth_sum / self.accumulation.max(DEPTH_EPS),
            dropped: 0,
        }
    }
}

/// One shaded sample as seen by the compositor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shaded {
    pub sigma: f64,
    pub delta: f64,
    pub color: [f64; 3],
    pub t: f64,
}

pub fn composite(samples: &[Shaded], background: [f64; 3]) -> RayOutput {
    let mut comp = Compositor::default();
    for s in samples {
        comp.push(s.sigma, s.delta, s.color, s.t);
    }
    comp.finish(background)
}

/// Gradients of the composited color with respect to each sample's density
/// and color, given `g_rgb = d loss / d rgb`. Writes `d loss / d sigma_i`
/// into `g_sigma` and `d loss / d c_i` into `g_color`.
pub fn composite_backward(
    samples: &[Shaded],
    background: [f64; 3],
    g_rgb: [f64; 3],
    g_sigma: &mut [f64],
    g_color: &mut [[f64; 3]],
) {
    let n = samples.len();
    let mut trans = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n);
    let mut t = 1.0;
    trans.push(t);
    for s in samples {
        let decay = exp(-s.sigma * s.delta);
        weights.push(t * (1.0 - decay));
        t *= decay;
        trans.push(t);
    }
    // `rest` is the color contributed after sample i, background included.
    let mut rest: [f64; 3] = core::array::from_fn(|c| t * background[c]);
    for i in (0..n).rev() {
        let s = &samples[i];
        let mut g = 0.0;
        for c in 0..3 {
            g += g_rgb[c] * (trans[i + 1] * s.color[c] - rest[c]);
            g_color[i][c] = weights[i] * g_rgb[c];
            rest[c] += weights[i] * s.color[c];
        }
        g_sigma[i] = s.delta * g;
    }
}

/// Point location and boundary intersection for one vertex placement of a
/// mesh. Samples landing in tets with non-positive orientation are dropped.
#[derive(Debug, Clone)]
pub struct QueryGeometry {
    pub locator: Locator,
    pub surface: SurfaceBvh,
    inverted: usize,
}

impl QueryGeometry {
    pub fn canonical(mesh: &TetMesh) -> Self {
        QueryGeometry::new(mesh, mesh.vertices())
    }

    pub fn new(mesh: &TetMesh, positions: &[Vec3]) -> Self {
        let locator = Locator::new(mesh, positions);
        let inverted = locator.frames().iter().filter(|f| !(f.det() > 0.0)).count();
        QueryGeometry { surface: build_bvh_with_positions(mesh, positions), locator, inverted }
    }

    /// Number of inverted or degenerate tets.
    pub fn inverted_tets(&self) -> usize {
        self.inverted
    }

    #[inline]
    pub fn usable(&self, loc: &TetLocation) -> bool {
        self.inverted == 0 || self.locator.frame(loc.tet).det() > 0.0
    }
}

/// Walks the samples of `ray` in `geometry`, calling `shade` on every
/// usable one until transmittance is exhausted.
pub fn march<R: rand::Rng>(
    ray: &Ray,
    geometry: &QueryGeometry,
    settings: &RenderSettings,
    jitter: Option<&mut R>,
    mut shade: impl FnMut(&crate::raytrace::SamplePoint) -> (f64, [f64; 3]),
) -> RayOutput {
    let intervals = ray_intervals(ray, &geometry.locator, &geometry.surface);
    if intervals.is_empty() {
        return RayOutput::background(settings.background);
    }
    let mut comp = Compositor::default();
    let mut dropped = 0u32;
    let mut sampler = RaySampler::new(*ray, &intervals, &geometry.locator, settings.step, jitter);
    for s in sampler.by_ref() {
        if !geometry.usable(&s.loc) {
            dropped += 1;
            continue;
        }
        let (sigma, color) = shade(&s);
        comp.push(sigma, s.delta, color, s.t);
        if comp.transmittance < settings.min_transmittance {
            break;
        }
    }
    dropped += sampler.dropped() as u32;
    let mut out = comp.finish(settings.background);
    out.dropped = dropped;
    out
}

/// A rendered image with its accumulation and depth maps (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub accumulation: Vec<f64>,
    pub depth: Vec<f64>,
    pub dropped: u64,
}

impl RenderedImage {
    pub fn from_outputs(width: u32, height: u32, outputs: Vec<RayOutput>) -> Self {
        assert_eq!(outputs.len(), (width * height) as usize);
        RenderedImage {
            width,
            height,
            rgb: outputs.iter().map(|o| o.rgb).collect(),
            accumulation: outputs.iter().map(|o| o.accumulation).collect(),
            depth: outputs.iter().map(|o| o.depth).collect(),
            dropped: outputs.iter().map(|o| o.dropped as u64).sum(),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.rgb[(y * self.width + x) as usize]
    }
}
