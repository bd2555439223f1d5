//! The trainable radiance field: hierarchical features, two MLP heads and
//! volume rendering over a coarse tetrahedral mesh.

pub mod camera;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod render;
pub mod sh;
pub mod train;

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::encoding::{EncodingError, EncodingTrace, FeatureBank, HashConfig};
use crate::raytrace::Ray;
use crate::tetmesh::{TetLocation, TetMesh};
use camera::Camera;
use mlp::{MlpParams, SampleCache, MAX_INPUT_DIM};
use render::{march, QueryGeometry, RayOutput, RenderSettings, RenderedImage};
use sh::{sh_encode, SH_DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("encoded width {0} exceeds the supported maximum of {MAX_INPUT_DIM}")]
    InputWidth(usize),
    #[error("MLP expects {mlp} inputs but the feature bank produces {bank}")]
    WidthMismatch { mlp: usize, bank: usize },
    #[error("render step must be positive and finite, got {0}")]
    Step(f64),
}

/// Per-thread buffers for shading one sample.
#[derive(Debug, Clone, Copy)]
pub struct Scratch {
    pub x: [f64; MAX_INPUT_DIM],
    pub cache: SampleCache,
    pub trace: EncodingTrace,
}

impl Default for Scratch {
    fn default() -> Self {
        Scratch { x: [0.0; MAX_INPUT_DIM], cache: SampleCache::default(), trace: EncodingTrace::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    /// Coarse canonical mesh; the only stored geometry.
    pub mesh: TetMesh,
    pub bank: FeatureBank,
    pub mlp: MlpParams,
    pub settings: RenderSettings,
}

impl RadianceField {
    /// Fresh field with randomly initialized tables and MLP.
    pub fn new(mesh: TetMesh, hash: HashConfig, settings: RenderSettings, rng: &mut impl Rng) -> Result<Self, FieldError> {
        let bank = FeatureBank::random(hash, rng)?;
        let width = hash.output_dim();
        if width > MAX_INPUT_DIM {
            return Err(FieldError::InputWidth(width));
        }
        let mlp = MlpParams::random(width, rng);
        RadianceField::from_parts(mesh, bank, mlp, settings)
    }

    pub fn from_parts(mesh: TetMesh, bank: FeatureBank, mlp: MlpParams, settings: RenderSettings) -> Result<Self, FieldError> {
        let width = bank.config().output_dim();
        if width > MAX_INPUT_DIM {
            return Err(FieldError::InputWidth(width));
        }
        if mlp.in_dim() != width {
            return Err(FieldError::WidthMismatch { mlp: mlp.in_dim(), bank: width });
        }
        if !(settings.step > 0.0 && settings.step.is_finite()) {
            return Err(FieldError::Step(settings.step));
        }
        Ok(RadianceField { mesh, bank, mlp, settings })
    }

    pub fn config(&self) -> &HashConfig {
        self.bank.config()
    }

    /// Query structures for the undeformed mesh.
    pub fn geometry(&self) -> QueryGeometry {
        QueryGeometry::canonical(&self.mesh)
    }

    /// Density and color of a located sample. `loc.bary` may come from any
    /// placement of the mesh; features are always keyed canonically.
    #[inline]
    pub fn shade(&self, loc: &TetLocation, dir_sh: &[f64; SH_DIM], scratch: &mut Scratch) -> (f64, [f64; 3]) {
        let width = self.mlp.in_dim();
        let coarse = self.mesh.tet_vertices(loc.tet);
        self.bank.encode_traced(&coarse, loc.bary, &mut scratch.x[..width], &mut scratch.trace);
        self.mlp.forward(&scratch.x[..width], dir_sh, &mut scratch.cache)
    }

    /// Density only.
    pub fn density(&self, loc: &TetLocation) -> f64 {
        let width = self.mlp.in_dim();
        let mut x = [0.0; MAX_INPUT_DIM];
        let mut trace = EncodingTrace::default();
        self.bank.encode_traced(&self.mesh.tet_vertices(loc.tet), loc.bary, &mut x[..width], &mut trace);
        self.mlp.density(&x[..width])
    }

    pub fn render_ray<R: Rng>(&self, geometry: &QueryGeometry, ray: &Ray, jitter: Option<&mut R>) -> RayOutput {
        let dir_sh = sh_encode(ray.direction);
        let mut scratch = Scratch::default();
        march(ray, geometry, &self.settings, jitter, |s| self.shade(&s.loc, &dir_sh, &mut scratch))
    }

    /// Deterministic (unjittered) render of a pixel center.
    pub fn render_pixel(&self, geometry: &QueryGeometry, camera: &Camera, x: u32, y: u32) -> RayOutput {
        self.render_ray::<rand_chacha::ChaCha8Rng>(geometry, &camera.pixel_ray(x, y), None)
    }

    /// Renders the listed pixels in the given order.
    pub fn render_pixels(&self, geometry: &QueryGeometry, camera: &Camera, pixels: &[(u32, u32)]) -> Vec<RayOutput> {
        pixels.iter().map(|&(x, y)| self.render_pixel(geometry, camera, x, y)).collect()
    }

    /// Single-threaded row-major render.
    pub fn render_image_serial(&self, geometry: &QueryGeometry, camera: &Camera) -> RenderedImage {
        let (w, h) = (camera.width, camera.height);
        let mut out = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                out.push(self.render_pixel(geometry, camera, x, y));
            }
        }
        RenderedImage::from_outputs(w, h, out)
    }

    /// Renders every pixel, in parallel when the `parallel` feature is on.
    /// Pixels are independent, so the result equals the serial render.
    pub fn render_image(&self, geometry: &QueryGeometry, camera: &Camera) -> RenderedImage {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            let (w, h) = (camera.width, camera.height);
            let rows: Vec<Vec<RayOutput>> = (0..h)
                .into_par_iter()
                .map(|y| (0..w).map(|x| self.render_pixel(geometry, camera, x, y)).collect())
                .collect();
            RenderedImage::from_outputs(w, h, rows.into_iter().flatten().collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.render_image_serial(geometry, camera)
        }
    }
}
