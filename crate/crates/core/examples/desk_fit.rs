//! Trains the two-stage pipeline on the built-in sphere scene and reports
//! test PSNR. Usage: `desk_fit [stage1_iters] [stage2_iters] [batch] [levels]`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetrf_core::encoding::HashConfig;
use tetrf_core::field::train::{evaluate, train_two_stage, TrainConfig};
use tetrf_core::scene::{CameraRig, ProceduralScene};
use tetrf_core::{generate_grid, RenderSettings, TetGridConfig};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let scene = ProceduralScene::sphere();
    let rig = CameraRig::default();
    let t0 = Instant::now();
    let train = scene.dataset(&rig.train_cameras(32), 1.0 / 512.0);
    let test = scene.dataset(&rig.test_cameras(8), 1.0 / 512.0);
    println!("datasets in {:.1}s", t0.elapsed().as_secs_f64());
    let config = TrainConfig {
        stage1_iters: arg(1, 600),
        stage2_iters: arg(2, 6000),
        batch_rays: arg(3, 256),
        levels: arg(4, 6),
        ..Default::default()
    };
    let hash = HashConfig::default();
    let settings = RenderSettings { step: 1.0 / 128.0, ..Default::default() };
    let grid = generate_grid(&TetGridConfig::new(0.05)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t0 = Instant::now();
    let (field, stage1) = train_two_stage(&train, grid, hash, settings, &config, &mut rng, &mut |p| {
        if p.iteration % 100 == 0 {
            println!("stage={} iter={} loss={:.5} psnr={:.2} kept={:?} t={:.1}", p.stage, p.iteration, p.loss, p.psnr, p.kept, t0.elapsed().as_secs_f64());
        }
    })
    .unwrap();
    println!("kept {:.3} ({} tets) train {:.1}s", stage1.kept_fraction(), stage1.pruned.num_tets(), t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let psnrs = evaluate(&field, &test);
    let mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
    println!("test psnr {mean:.2} {psnrs:?} eval {:.1}s", t1.elapsed().as_secs_f64());
}
