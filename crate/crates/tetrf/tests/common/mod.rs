#![allow(dead_code)]


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetrf_core::encoding::HashConfig;
use tetrf_core::{generate_grid, Camera, RadianceField, RenderSettings, TetGridConfig, Vec3};

/// An untrained but deterministic field on a coarse grid.
pub fn small_field(seed: u64) -> RadianceField {
    let mesh = generate_grid(&TetGridConfig::new(0.25)).unwrap();
    let hash = HashConfig { table_size: 1 << 10, levels: 2, ..HashConfig::default() };
    let settings = RenderSettings { step: 1.0 / 32.0, ..RenderSettings::default() };
    let mut field = RadianceField::new(mesh, hash, settings, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    // Make the random field visibly non-trivial.
    for (i, v) in field.bank.tables.iter_mut().enumerate() {
        *v = ((i * 7919) % 1000) as f64 / 500.0 - 1.0;
    }
    field
}

pub fn camera(size: u32) -> Camera {
    Camera::look_at(Vec3::new(0.5, -1.2, 0.9), Vec3::splat(0.5), Vec3::new(0.0, 0.0, 1.0), 45f64.to_radians(), size, size)
}
