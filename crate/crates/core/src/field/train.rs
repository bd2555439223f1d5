//! Photometric training: per-ray forward/backward, batched Adam steps,
//! occupancy estimation and the two-stage (coarse grid, then pruned mesh)
//! procedure.
//!
//! Rays of a batch are split into fixed-size chunks. Each chunk produces
//! its own dense MLP gradient and a sparse list of table gradients, and the
//! chunks are summed in chunk order, so a step gives bitwise the same
//! result whether chunks ran on one thread or many.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::camera::Camera;
use super::mlp::{SampleCache, SIGMA_RAW_MAX};
use super::optim::{cosine_lr, Adam, AdamConfig};
use super::render::{composite_backward, Compositor, QueryGeometry, RenderSettings, Shaded};
use super::sh::sh_encode;
use super::{FieldError, RadianceField, Scratch};
use crate::encoding::{EncodingTrace, HashConfig};
use crate::math::log10;
use crate::raytrace::{ray_intervals, Ray, RaySampler};
use crate::subdivision::{child_to_parent_bary, ChildIndex};
use crate::tetmesh::{MeshError, TetLocation, TetMesh};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("non-finite loss {loss} at iteration {iteration} (stage {stage}); parameters finite: {params_finite}")]
    NonFiniteLoss { stage: u8, iteration: usize, loss: f64, params_finite: bool },
    #[error("occupancy pruning kept no tetrahedra (max density estimate {max_ema:.3e}, threshold {threshold})")]
    EmptyKeepMask { max_ema: f64, threshold: f64 },
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("dataset has no pixels")]
    EmptyDataset,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Floor of the cosine schedule.
    pub lr_min: f64,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub stage1_levels: usize,
    pub levels: usize,
    pub batch_rays: usize,
    /// Occupancy update period `K`, in iterations.
    pub occupancy_period: usize,
    /// Random points per tet per update, stratified over the 8 children.
    pub occupancy_samples: usize,
    pub occupancy_decay: f64,
    pub occupancy_threshold: f64,
    /// Tets updated fewer times than this are never pruned.
    pub occupancy_min_updates: u32,
    /// Rays per gradient chunk (the unit of deterministic reduction).
    pub chunk_rays: usize,
    pub jitter: bool,
    /// Composite each training ray on a random background when the
    /// dataset has alpha, so that empty space cannot hide behind the
    /// fixed background color.
    pub random_background: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            lr_min: 0.0,
            stage1_iters: 5_000,
            stage2_iters: 15_000,
            stage1_levels: 3,
            levels: 6,
            batch_rays: 4096,
            occupancy_period: 16,
            occupancy_samples: 32,
            occupancy_decay: 0.95,
            occupancy_threshold: 0.01,
            occupancy_min_updates: 2,
            chunk_rays: 32,
            jitter: true,
            random_background: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(TrainError::Config("optimizer settings out of range"));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= a.lr) {
            return Err(TrainError::Config("lr_min must be in [0, lr]"));
        }
        if self.stage1_levels == 0 || self.levels == 0 || self.stage1_levels > self.levels {
            return Err(TrainError::Config("levels must satisfy 1 <= stage1_levels <= levels"));
        }
        if self.batch_rays == 0 || self.chunk_rays == 0 || self.occupancy_period == 0 {
            return Err(TrainError::Config("batch, chunk and occupancy period must be positive"));
        }
        if !(self.occupancy_decay > 0.0 && self.occupancy_decay <= 1.0) || !(self.occupancy_threshold > 0.0) {
            return Err(TrainError::Config("occupancy decay must be in (0, 1] and threshold positive"));
        }
        Ok(())
    }
}

/// One posed training image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    /// Row-major linear RGB, already composited on the dataset background.
    pub pixels: Vec<[f32; 3]>,
    /// Per-pixel opacity, when the source images carry it.
    pub alpha: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub views: Vec<View>,
    /// The color `pixels` were composited on.
    pub background: [f64; 3],
}

/// One pixel of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetPixel {
    pub ray: Ray,
    pub rgb: [f64; 3],
    pub alpha: Option<f64>,
}

impl DatasetPixel {
    /// The pixel as it would look composited on `background` instead.
    /// Opaque-only sources cannot be recomposited and keep their color.
    pub fn on_background(&self, original: [f64; 3], background: [f64; 3]) -> [f64; 3] {
        match self.alpha {
            Some(a) => core::array::from_fn(|c| self.rgb[c] + (1.0 - a) * (background[c] - original[c])),
            None => self.rgb,
        }
    }
}

impl Dataset {
    pub fn new(views: Vec<View>, background: [f64; 3]) -> Self {
        Dataset { views, background }
    }

    pub fn num_rays(&self) -> usize {
        self.views.iter().map(|v| v.pixels.len()).sum()
    }

    /// The `index`-th pixel over all views.
    pub fn pixel(&self, mut index: usize) -> DatasetPixel {
        for v in &self.views {
            if index < v.pixels.len() {
                let w = v.camera.width as usize;
                let (x, y) = ((index % w) as u32, (index / w) as u32);
                return DatasetPixel {
                    ray: v.camera.pixel_ray(x, y),
                    rgb: v.pixels[index].map(f64::from),
                    alpha: v.alpha.as_ref().map(|a| f64::from(a[index])),
                };
            }
            index -= v.pixels.len();
        }
        panic!("ray index out of range");
    }
}

/// A training ray with its target, the background both are composited
/// on, and a jitter seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRay {
    pub ray: Ray,
    pub target: [f64; 3],
    pub background: [f64; 3],
    pub seed: u64,
}

/// Gradients of one chunk: dense for the MLP, sparse `(table offset, value)`
/// pairs for the feature tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub mlp: Vec<f64>,
    pub table: Vec<(u32, f64)>,
}

impl Gradients {
    pub fn new(num_mlp: usize) -> Self {
        Gradients { mlp: alloc::vec![0.0; num_mlp], table: Vec::new() }
    }

    /// Adds the table part into a dense gradient vector.
    pub fn scatter(&self, dense: &mut [f64]) {
        for &(i, g) in &self.table {
            dense[i as usize] += g;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Record {
    cache: SampleCache,
    trace: EncodingTrace,
    shaded: Shaded,
}

/// Reusable per-thread buffers for ray backward passes.
#[derive(Debug, Default)]
pub struct RayWork {
    records: Vec<Record>,
    shaded: Vec<Shaded>,
    g_sigma: Vec<f64>,
    g_color: Vec<[f64; 3]>,
}

/// Forward and backward pass of one ray, composited on `background`, for
/// the loss `scale * |rgb - target|^2`. Returns the rendered color;
/// gradients are added to `grads`.
#[allow(clippy::too_many_arguments)]
pub fn ray_gradients(
    field: &RadianceField,
    geometry: &QueryGeometry,
    ray: &Ray,
    target: [f64; 3],
    background: [f64; 3],
    scale: f64,
    jitter_seed: Option<u64>,
    work: &mut RayWork,
    grads: &mut Gradients,
) -> [f64; 3] {
    let settings = &field.settings;
    let bg = background;
    work.records.clear();
    let intervals = ray_intervals(ray, &geometry.locator, &geometry.surface);
    if !intervals.is_empty() {
        let dir_sh = sh_encode(ray.direction);
        let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
        let sampler = RaySampler::new(*ray, &intervals, &geometry.locator, settings.step, rng.as_mut());
        let mut comp = Compositor::default();
        let mut scratch = Scratch::default();
        for s in sampler {
            if !geometry.usable(&s.loc) {
                continue;
            }
            let (sigma, color) = field.shade(&s.loc, &dir_sh, &mut scratch);
            comp.push(sigma, s.delta, color, s.t);
            work.records.push(Record {
                cache: scratch.cache,
                trace: scratch.trace,
                shaded: Shaded { sigma, delta: s.delta, color, t: s.t },
            });
            if comp.transmittance < settings.min_transmittance {
                break;
            }
        }
    }
    work.shaded.clear();
    work.shaded.extend(work.records.iter().map(|r| r.shaded));
    let mut comp = Compositor::default();
    for s in &work.shaded {
        comp.push(s.sigma, s.delta, s.color, s.t);
    }
    let rgb = comp.finish(bg).rgb;
    if work.records.is_empty() {
        return rgb;
    }
    let g_rgb: [f64; 3] = core::array::from_fn(|c| 2.0 * scale * (rgb[c] - target[c]));
    let n = work.records.len();
    work.g_sigma.resize(n, 0.0);
    work.g_color.resize(n, [0.0; 3]);
    composite_backward(&work.shaded, bg, g_rgb, &mut work.g_sigma, &mut work.g_color);
    let width = field.mlp.in_dim();
    let f = field.bank.config().feature_dim;
    let mut gx = [0.0; super::mlp::MAX_INPUT_DIM];
    for (i, r) in work.records.iter().enumerate() {
        let g_raw = if r.cache.sigma_raw() < SIGMA_RAW_MAX { work.g_sigma[i] * r.shaded.sigma } else { 0.0 };
        field.mlp.backward(&r.cache, g_raw, work.g_color[i], &mut grads.mlp, &mut gx[..width]);
        for (k, (entry, w)) in r.trace.iter().enumerate() {
            let level = k / 4;
            for j in 0..f {
                let g = w * gx[level * f + j];
                if g != 0.0 {
                    grads.table.push(((entry + j) as u32, g));
                }
            }
        }
    }
    rgb
}

/// Total loss contribution and gradients of a chunk of rays.
fn chunk_gradients(field: &RadianceField, geometry: &QueryGeometry, rays: &[TrainRay], scale: f64, jitter: bool) -> (f64, Gradients) {
    let mut grads = Gradients::new(field.mlp.num_params());
    let mut work = RayWork::default();
    let mut loss = 0.0;
    for r in rays {
        let rgb = ray_gradients(field, geometry, &r.ray, r.target, r.background, scale, jitter.then_some(r.seed), &mut work, &mut grads);
        loss += (0..3).map(|c| (rgb[c] - r.target[c]) * (rgb[c] - r.target[c])).sum::<f64>();
    }
    (loss * scale, grads)
}

/// Chunks evaluated together before their gradients are merged.
const CHUNKS_PER_WAVE: usize = 16;

/// Mean squared error of `rays` and its gradients: the MLP part goes to
/// the returned vector, the table part into `field.bank.grads`.
pub fn batch_gradients(field: &mut RadianceField, geometry: &QueryGeometry, rays: &[TrainRay], chunk: usize, jitter: bool) -> (f64, Vec<f64>) {
    let scale = 1.0 / (3 * rays.len()) as f64;
    let mut mlp = alloc::vec![0.0; field.mlp.num_params()];
    field.bank.zero_grads();
    let mut loss = 0.0;
    let chunks: Vec<&[TrainRay]> = rays.chunks(chunk.max(1)).collect();
    for wave in chunks.chunks(CHUNKS_PER_WAVE) {
        let results = compute_wave(field, geometry, wave, scale, jitter);
        for (l, g) in results {
            loss += l;
            for (a, b) in mlp.iter_mut().zip(&g.mlp) {
                *a += b;
            }
            g.scatter(&mut field.bank.grads);
        }
    }
    (loss, mlp)
}

#[cfg(feature = "parallel")]
fn compute_wave(field: &RadianceField, geometry: &QueryGeometry, wave: &[&[TrainRay]], scale: f64, jitter: bool) -> Vec<(f64, Gradients)> {
    use rayon::prelude::*;
    wave.par_iter().map(|c| chunk_gradients(field, geometry, c, scale, jitter)).collect()
}

#[cfg(not(feature = "parallel"))]
fn compute_wave(field: &RadianceField, geometry: &QueryGeometry, wave: &[&[TrainRay]], scale: f64, jitter: bool) -> Vec<(f64, Gradients)> {
    wave.iter().map(|c| chunk_gradients(field, geometry, c, scale, jitter)).collect()
}

/// Per-step report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iteration: usize,
    /// Pre-update batch MSE.
    pub loss: f64,
    pub lr: f64,
}

impl StepStats {
    pub fn psnr(&self) -> f64 {
        if self.loss > 0.0 {
            -10.0 * log10(self.loss)
        } else {
            f64::INFINITY
        }
    }
}

/// Optimizer state bound to one field.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub field: RadianceField,
    pub geometry: QueryGeometry,
    pub config: TrainConfig,
    adam_mlp: Adam,
    adam_tables: Adam,
    iteration: usize,
    total: usize,
    stage: u8,
}

impl Trainer {
    /// `total` is the schedule length used for cosine annealing.
    pub fn new(field: RadianceField, config: TrainConfig, total: usize, stage: u8) -> Self {
        let geometry = field.geometry();
        let adam_mlp = Adam::new(config.adam, field.mlp.num_params());
        let adam_tables = Adam::new(config.adam, field.bank.tables.len());
        Trainer { field, geometry, config, adam_mlp, adam_tables, iteration: 0, total, stage }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_field(self) -> RadianceField {
        self.field
    }

    /// Draws a batch of pixels, jitter seeds and, with
    /// `random_background`, a uniformly random background per ray.
    pub fn sample_batch(&self, dataset: &Dataset, rng: &mut impl Rng) -> Vec<TrainRay> {
        let n = dataset.num_rays();
        (0..self.config.batch_rays)
            .map(|_| {
                let px = dataset.pixel(rng.gen_range(0..n));
                let seed = rng.gen();
                if self.config.random_background && px.alpha.is_some() {
                    let background = [rng.gen(), rng.gen(), rng.gen()];
                    TrainRay { ray: px.ray, target: px.on_background(dataset.background, background), background, seed }
                } else {
                    TrainRay { ray: px.ray, target: px.rgb, background: dataset.background, seed }
                }
            })
            .collect()
    }

    pub fn train_step(&mut self, dataset: &Dataset, rng: &mut impl Rng) -> Result<StepStats, TrainError> {
        if dataset.num_rays() == 0 {
            return Err(TrainError::EmptyDataset);
        }
        let batch = self.sample_batch(dataset, rng);
        self.step_on(&batch)
    }

    /// One optimizer step on explicit rays; returns the pre-step loss.
    pub fn step_on(&mut self, rays: &[TrainRay]) -> Result<StepStats, TrainError> {
        if rays.is_empty() {
            return Err(TrainError::Config("batch must be non-empty"));
        }
        let (loss, mlp_grads) = batch_gradients(&mut self.field, &self.geometry, rays, self.config.chunk_rays, self.config.jitter);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                stage: self.stage,
                iteration: self.iteration,
                loss,
                params_finite: self.field.mlp.is_finite() && self.field.bank.is_finite(),
            });
        }
        let lr = cosine_lr(self.config.adam.lr, self.config.lr_min, self.iteration as u64, self.total as u64);
        self.adam_mlp.update(&mut self.field.mlp.params, &mlp_grads, lr);
        let bank = &mut self.field.bank;
        self.adam_tables.update_lazy(&mut bank.tables, &bank.grads, lr);
        let stats = StepStats { iteration: self.iteration, loss, lr };
        self.iteration += 1;
        Ok(stats)
    }
}

/// Running per-tet maximum-density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub ema: Vec<f64>,
    pub updates: Vec<u32>,
}

impl Occupancy {
    pub fn new(num_tets: usize) -> Self {
        Occupancy { ema: alloc::vec![0.0; num_tets], updates: alloc::vec![0; num_tets] }
    }

    /// Evaluates `density` at each tet's centroid plus `samples` random
    /// points spread over its eight children, then folds the maximum into
    /// the decayed estimate.
    pub fn update<F>(&mut self, mesh: &TetMesh, density: F, samples: usize, decay: f64, rng: &mut impl Rng)
    where
        F: Fn(&TetLocation) -> f64 + Sync,
    {
        assert_eq!(self.ema.len(), mesh.num_tets());
        let points = stratified_points(mesh.num_tets(), samples, rng);
        let per_tet = samples + 1;
        let max_at = |t: usize| -> f64 {
            points[t * per_tet..(t + 1) * per_tet]
                .iter()
                .map(|&bary| density(&TetLocation { tet: t as u32, bary }))
                .fold(0.0, f64::max)
        };
        #[cfg(feature = "parallel")]
        let maxima: Vec<f64> = {
            use rayon::prelude::*;
            (0..mesh.num_tets()).into_par_iter().map(max_at).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let maxima: Vec<f64> = (0..mesh.num_tets()).map(max_at).collect();
        for (t, m) in maxima.into_iter().enumerate() {
            self.ema[t] = (decay * self.ema[t]).max(m);
            self.updates[t] += 1;
        }
    }

    /// Tets whose estimate times `step` exceeds `threshold`, plus any
    /// updated fewer than `min_updates` times.
    pub fn keep_mask(&self, step: f64, threshold: f64, min_updates: u32) -> Vec<bool> {
        self.ema
            .iter()
            .zip(&self.updates)
            .map(|(&e, &u)| u < min_updates || e * step > threshold)
            .collect()
    }
}

/// Barycentric sample points: per tet, the centroid followed by `samples`
/// uniform points, the `m`-th inside child `m mod 8`.
pub fn stratified_points(num_tets: usize, samples: usize, rng: &mut impl Rng) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(num_tets * (samples + 1));
    for _ in 0..num_tets {
        out.push([0.25; 4]);
        for m in 0..samples {
            let child = ChildIndex::new((m % 8) as u8).expect("child index below 8");
            out.push(child_to_parent_bary(child, &uniform_bary(rng)));
        }
    }
    out
}

/// Uniform point in a tet, as barycentric weights (flat Dirichlet).
pub fn uniform_bary(rng: &mut impl Rng) -> [f64; 4] {
    let e: [f64; 4] = core::array::from_fn(|_| -crate::math::ln(1.0 - rng.gen::<f64>()));
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Training progress record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub stage: u8,
    pub iteration: usize,
    pub loss: f64,
    pub psnr: f64,
    pub lr: f64,
    /// Fraction of tets currently passing the keep test (stage 1 only).
    pub kept: Option<f64>,
}

/// Outcome of the first stage.
#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub field: RadianceField,
    pub occupancy: Occupancy,
    pub keep: Vec<bool>,
    /// The pruned coarse mesh handed to the second stage.
    pub pruned: TetMesh,
}

impl Stage1Output {
    pub fn kept_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }
}

fn run_iterations<R: Rng>(
    trainer: &mut Trainer,
    dataset: &Dataset,
    iterations: usize,
    rng: &mut R,
    progress: &mut dyn FnMut(&Progress),
    mut after_step: impl FnMut(&mut Trainer, usize, &mut R) -> Option<f64>,
) -> Result<(), TrainError> {
    for i in 0..iterations {
        let stats = trainer.train_step(dataset, rng)?;
        let kept = after_step(trainer, i, rng);
        progress(&Progress { stage: trainer.stage, iteration: i, loss: stats.loss, psnr: stats.psnr(), lr: stats.lr, kept });
    }
    Ok(())
}

/// Stage 1: trains `stage1_levels` levels on the full `grid`, refreshing
/// the occupancy estimate every `occupancy_period` iterations, then prunes.
pub fn train_stage1<R: Rng>(
    dataset: &Dataset,
    grid: TetMesh,
    hash: HashConfig,
    settings: RenderSettings,
    config: &TrainConfig,
    rng: &mut R,
    progress: &mut dyn FnMut(&Progress),
) -> Result<Stage1Output, TrainError> {
    config.validate()?;
    let field = RadianceField::new(grid, hash.with_levels(config.stage1_levels), settings, rng)?;
    let mut occupancy = Occupancy::new(field.mesh.num_tets());
    let mut trainer = Trainer::new(field, *config, config.stage1_iters, 1);
    let period = config.occupancy_period;
    let mut keep_fraction = None;
    run_iterations(&mut trainer, dataset, config.stage1_iters, rng, progress, |t, i, rng| {
        if (i + 1) % period == 0 {
            let field = &t.field;
            occupancy.update(&field.mesh, |loc| field.density(loc), config.occupancy_samples, config.occupancy_decay, rng);
            let keep = occupancy.keep_mask(field.settings.step, config.occupancy_threshold, config.occupancy_min_updates);
            keep_fraction = Some(keep.iter().filter(|&&k| k).count() as f64 / keep.len() as f64);
        }
        keep_fraction
    })?;
    let field = trainer.into_field();
    let keep = occupancy.keep_mask(field.settings.step, config.occupancy_threshold, config.occupancy_min_updates);
    if !keep.iter().any(|&k| k) {
        let max_ema = occupancy.ema.iter().cloned().fold(0.0, f64::max);
        return Err(TrainError::EmptyKeepMask { max_ema, threshold: config.occupancy_threshold });
    }
    let pruned = field.mesh.prune(&keep)?;
    Ok(Stage1Output { field, occupancy, keep, pruned })
}

/// Stage 2: fresh tables and MLP with `levels` levels on the pruned mesh.
pub fn train_stage2<R: Rng>(
    dataset: &Dataset,
    mesh: TetMesh,
    hash: HashConfig,
    settings: RenderSettings,
    config: &TrainConfig,
    levels: usize,
    rng: &mut R,
    progress: &mut dyn FnMut(&Progress),
) -> Result<RadianceField, TrainError> {
    config.validate()?;
    let field = RadianceField::new(mesh, hash.with_levels(levels), settings, rng)?;
    let mut trainer = Trainer::new(field, *config, config.stage2_iters, 2);
    run_iterations(&mut trainer, dataset, config.stage2_iters, rng, progress, |_, _, _| None)?;
    Ok(trainer.into_field())
}

/// Both stages; returns the final field (whose mesh is the pruned coarse
/// mesh) and the stage-1 outcome.
pub fn train_two_stage<R: Rng>(
    dataset: &Dataset,
    grid: TetMesh,
    hash: HashConfig,
    settings: RenderSettings,
    config: &TrainConfig,
    rng: &mut R,
    progress: &mut dyn FnMut(&Progress),
) -> Result<(RadianceField, Stage1Output), TrainError> {
    let stage1 = train_stage1(dataset, grid, hash, settings, config, rng, progress)?;
    let field = train_stage2(dataset, stage1.pruned.clone(), hash, settings, config, config.levels, rng, progress)?;
    Ok((field, stage1))
}

/// Baseline without pruning: `levels` levels on the full grid for
/// `stage1_iters + stage2_iters` iterations.
pub fn train_single_stage<R: Rng>(
    dataset: &Dataset,
    grid: TetMesh,
    hash: HashConfig,
    settings: RenderSettings,
    config: &TrainConfig,
    rng: &mut R,
    progress: &mut dyn FnMut(&Progress),
) -> Result<RadianceField, TrainError> {
    let single = TrainConfig { stage2_iters: config.stage1_iters + config.stage2_iters, ..*config };
    train_stage2(dataset, grid, hash, settings, &single, config.levels, rng, progress)
}

/// Renders every view of `dataset` and returns the per-view PSNR.
pub fn evaluate(field: &RadianceField, dataset: &Dataset) -> Vec<f64> {
    let geometry = field.geometry();
    dataset
        .views
        .iter()
        .map(|v| {
            let img = field.render_image(&geometry, &v.camera);
            let reference: Vec<[f64; 3]> = v.pixels.iter().map(|p| p.map(f64::from)).collect();
            super::metrics::psnr(&img.rgb, &reference)
        })
        .collect()
}
