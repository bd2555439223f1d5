//! Multi-resolution feature encoding on (virtual) tetrahedral vertices.
//!
//! Each hierarchy level owns a hash table of trainable feature vectors.
//! Vertices are keyed by their canonical position quantized at
//! `base_scale * 2^level`, so virtual vertices need no global ids. A sample's
//! feature is the barycentric blend of its tet's four vertex features,
//! concatenated over levels.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::math::{round, Vec3};
use crate::subdivision::DescentState;
use crate::tetmesh::{TetLocation, TetMesh};

/// Deepest supported hierarchy.
pub const MAX_LEVELS: usize = 16;

/// Half-width of the uniform feature initialization.
pub const INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("table size {0} is not a power of two")]
    TableSize(usize),
    #[error("levels must be in 1..={max}, got {levels}")]
    Levels { levels: usize, max: usize },
    #[error("feature dimension must be at least 1")]
    FeatureDim,
    #[error("base scale {scale} overflows 32-bit quantization at level {level}")]
    Scale { scale: f64, level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashConfig {
    pub table_size: usize,
    pub feature_dim: usize,
    pub levels: usize,
    pub base_scale: f64,
    pub primes: [u32; 3],
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            table_size: 1 << 19,
            feature_dim: 2,
            levels: 6,
            base_scale: 4096.0,
            primes: [1, 2_654_435_761, 805_459_861],
        }
    }
}

impl HashConfig {
    pub fn validate(&self) -> Result<(), EncodingError> {
        if !self.table_size.is_power_of_two() {
            return Err(EncodingError::TableSize(self.table_size));
        }
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(EncodingError::Levels { levels: self.levels, max: MAX_LEVELS });
        }
        if self.feature_dim == 0 {
            return Err(EncodingError::FeatureDim);
        }
        let top = self.base_scale * (1u64 << (self.levels - 1)) as f64;
        if !(self.base_scale >= 1.0) || top >= u32::MAX as f64 {
            return Err(EncodingError::Scale { scale: self.base_scale, level: self.levels - 1 });
        }
        Ok(())
    }

    /// Length of the concatenated feature vector.
    pub fn output_dim(&self) -> usize {
        self.levels * self.feature_dim
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }
}

/// Table slot of a vertex at `level`.
#[inline(always)]
pub fn hash_vertex(pos: Vec3, level: usize, config: &HashConfig) -> u32 {
    let scale = config.base_scale * (1u64 << level) as f64;
    let q = |c: f64| round(c.clamp(0.0, 1.0) * scale) as u32;
    let h = q(pos.x).wrapping_mul(config.primes[0])
        ^ q(pos.y).wrapping_mul(config.primes[1])
        ^ q(pos.z).wrapping_mul(config.primes[2]);
    h & (config.table_size as u32 - 1)
}

/// Per-level trainable tables and their gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    config: HashConfig,
    /// Layout: `[level][slot][feature]`.
    pub tables: Vec<f64>,
    pub grads: Vec<f64>,
}

impl FeatureBank {
    pub fn zeros(config: HashConfig) -> Result<Self, EncodingError> {
        config.validate()?;
        let n = config.levels * config.table_size * config.feature_dim;
        Ok(FeatureBank { config, tables: alloc::vec![0.0; n], grads: alloc::vec![0.0; n] })
    }

    /// Tables drawn uniformly from `[-INIT_SCALE, INIT_SCALE]`.
    pub fn random(config: HashConfig, rng: &mut impl Rng) -> Result<Self, EncodingError> {
        let mut bank = FeatureBank::zeros(config)?;
        for v in bank.tables.iter_mut() {
            *v = rng.gen_range(-INIT_SCALE..INIT_SCALE);
        }
        Ok(bank)
    }

    pub fn from_tables(config: HashConfig, tables: Vec<f64>) -> Result<Self, EncodingError> {
        let mut bank = FeatureBank::zeros(config)?;
        assert_eq!(tables.len(), bank.tables.len(), "table length must match the config");
        bank.tables = tables;
        Ok(bank)
    }

    pub fn config(&self) -> &HashConfig {
        &self.config
    }

    /// Offset of `(level, slot)`'s first feature in `tables`.
    #[inline(always)]
    pub fn entry(&self, level: usize, slot: u32) -> usize {
        (level * self.config.table_size + slot as usize) * self.config.feature_dim
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.tables.iter().all(|v| v.is_finite())
    }

    /// Encodes a sample given its coarse tet's canonical vertices and its
    /// barycentric weights, writing `levels * feature_dim` values into `out`
    /// and the touched entries into `trace`.
    #[inline]
    pub fn encode_traced(&self, coarse: &[Vec3; 4], bary: [f64; 4], out: &mut [f64], trace: &mut EncodingTrace) {
        let cfg = &self.config;
        let f = cfg.feature_dim;
        debug_assert_eq!(out.len(), cfg.output_dim());
        trace.len = cfg.levels;
        let mut state = DescentState::new(bary, *coarse);
        for level in 0..cfg.levels {
            if level > 0 {
                state = state.descend().1;
            }
            let slice = &mut out[level * f..(level + 1) * f];
            slice.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..4 {
                let e = self.entry(level, hash_vertex(state.canonical_vertices[i], level, cfg));
                let w = state.bary[i];
                trace.entries[4 * level + i] = e as u32;
                trace.weights[4 * level + i] = w;
                for (o, t) in slice.iter_mut().zip(&self.tables[e..e + f]) {
                    *o += w * t;
                }
            }
        }
    }

    /// Adds `upstream` routed through `trace` into `grads`.
    #[inline]
    pub fn accumulate(&mut self, trace: &EncodingTrace, upstream: &[f64]) {
        let f = self.config.feature_dim;
        for level in 0..trace.len {
            let u = &upstream[level * f..(level + 1) * f];
            for i in 0..4 {
                let e = trace.entries[4 * level + i] as usize;
                let w = trace.weights[4 * level + i];
                for (g, du) in self.grads[e..e + f].iter_mut().zip(u) {
                    *g += w * du;
                }
            }
        }
    }
}

/// Table entries and weights visited by one encoding.
#[derive(Debug, Clone, Copy)]
pub struct EncodingTrace {
    pub entries: [u32; 4 * MAX_LEVELS],
    pub weights: [f64; 4 * MAX_LEVELS],
    pub len: usize,
}

impl Default for EncodingTrace {
    fn default() -> Self {
        EncodingTrace { entries: [0; 4 * MAX_LEVELS], weights: [0.0; 4 * MAX_LEVELS], len: 0 }
    }
}

impl EncodingTrace {
    /// `(entry offset, weight)` pairs, four per level.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..4 * self.len).map(|i| (self.entries[i] as usize, self.weights[i]))
    }
}

/// Concatenated multi-level feature of the point at `loc` in `mesh`.
pub fn encode_point(loc: &TetLocation, mesh: &TetMesh, bank: &FeatureBank) -> Vec<f64> {
    let mut out = alloc::vec![0.0; bank.config().output_dim()];
    let mut trace = EncodingTrace::default();
    bank.encode_traced(&mesh.tet_vertices(loc.tet), loc.bary, &mut out, &mut trace);
    out
}

/// Accumulates `d loss / d tables` for the encoding of `loc` into `bank.grads`.
pub fn encode_backward(loc: &TetLocation, upstream: &[f64], mesh: &TetMesh, bank: &mut FeatureBank) {
    let mut out = alloc::vec![0.0; bank.config().output_dim()];
    let mut trace = EncodingTrace::default();
    bank.encode_traced(&mesh.tet_vertices(loc.tet), loc.bary, &mut out, &mut trace);
    bank.accumulate(&trace, upstream);
}
