//! Level ablation on the built-in sphere scene: one shared first stage,
//! second stages at L = 1..=6, and a single-stage baseline.
//! Usage: `ablation [stage1_iters] [stage2_iters] [batch] [table_size_log2]`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetrf_core::encoding::HashConfig;
use tetrf_core::field::train::{evaluate, train_single_stage, train_stage1, train_stage2, TrainConfig};
use tetrf_core::scene::{tet_intersects_sphere, CameraRig, ProceduralScene, Shape};
use tetrf_core::{generate_grid, RenderSettings, TetGridConfig};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() {
    let scene = ProceduralScene::sphere();
    let rig = CameraRig::default();
    let train = scene.dataset(&rig.train_cameras(32), 1.0 / 512.0);
    let test = scene.dataset(&rig.test_cameras(8), 1.0 / 512.0);
    let config = TrainConfig { stage1_iters: arg(1, 600), stage2_iters: arg(2, 6000), batch_rays: arg(3, 256), ..Default::default() };
    let hash = HashConfig { table_size: 1 << arg(4, 19), ..Default::default() };
    let settings = RenderSettings { step: 1.0 / 128.0, ..Default::default() };
    let grid = generate_grid(&TetGridConfig::new(0.05)).unwrap();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stage1 = train_stage1(&train, grid.clone(), hash, settings, &config, &mut rng, &mut |_| {}).unwrap();
    let Shape::Sphere { center, radius } = scene.shape else { unreachable!() };
    let occupied: Vec<bool> = (0..grid.num_tets() as u32).map(|t| tet_intersects_sphere(&grid.tet_vertices(t), center, radius)).collect();
    let covered = occupied.iter().zip(&stage1.keep).filter(|(o, k)| **o && **k).count();
    let n_occ = occupied.iter().filter(|&&o| o).count();
    let missed: Vec<f64> = (0..grid.num_tets()).filter(|&t| occupied[t] && !stage1.keep[t]).map(|t| stage1.occupancy.ema[t]).collect();
    println!("stage1 {:.1}s kept {:.4} coverage {covered}/{n_occ} missed ema {missed:?}", t0.elapsed().as_secs_f64(), stage1.kept_fraction());
    for levels in 1..=6 {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let field = train_stage2(&train, stage1.pruned.clone(), hash, settings, &config, levels, &mut rng, &mut |_| {}).unwrap();
        println!("L={levels} psnr {:.3} ({:.1}s)", mean(&evaluate(&field, &test)), t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let single = train_single_stage(&train, grid, hash, settings, &config, &mut rng, &mut |_| {}).unwrap();
    println!("single psnr {:.3} ({:.1}s)", mean(&evaluate(&single, &test)), t.elapsed().as_secs_f64());
}
