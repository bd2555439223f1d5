use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tetrf::anim_io::read_animation;
use tetrf::config::RunConfig;
use tetrf::dataset::{load_split, write_split};
use tetrf::images::{quantized, rgb8_bytes, save_gray16, save_rgb8};
use tetrf::server::Server;
use tetrf::session::{camera_from_message, parse_script, pixel_checksum, Frame, Outgoing, ScriptRecord, SessionConfig, SessionState};
use tetrf::{checkpoint, mesh_io, subdiv_check};
use tetrf_core::deform::{render_deformed, validate_frames, DeformedQueryContext};
use tetrf_core::field::metrics::{format_psnr, psnr};
use tetrf_core::field::train::{train_single_stage, train_two_stage, Dataset, Progress, View};
use tetrf_core::scene::{CameraRig, ProceduralScene};
use tetrf_core::{generate_grid, Camera, RadianceField, TetGridConfig};

#[derive(Parser)]
#[command(name = "tetrf", version, about = "Tetrahedral multi-resolution radiance fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` overlay applied on top of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.overlay_file(path)?;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes the initial lattice grid over the unit cube.
    GenGrid {
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Renders a built-in analytic scene into a train/test dataset.
    GenScene {
        #[arg(long, default_value = "sphere")]
        scene: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        train_views: usize,
        #[arg(long, default_value_t = 8)]
        test_views: usize,
        #[arg(long, default_value_t = 128)]
        size: u32,
    },
    /// Two-stage training on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage1_iters: Option<usize>,
        #[arg(long)]
        stage2_iters: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        /// Train without pruning (all levels on the full grid).
        #[arg(long)]
        single_stage: bool,
        /// Iterations between progress records.
        #[arg(long, default_value_t = 100)]
        log_every: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Renders a checkpoint from a camera file, or every view of a dataset split.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        /// Camera JSON: {"pose": [16 row-major], "fov": degrees, "width": .., "height": ..}.
        #[arg(long, conflicts_with_all = ["data", "split"])]
        camera: Option<PathBuf>,
        #[arg(long, requires = "split")]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        split: Option<String>,
        /// Output PNG for `--camera`, output dataset directory for `--data`.
        #[arg(long)]
        out: PathBuf,
        /// 16-bit accumulation map (with `--camera`).
        #[arg(long)]
        accumulation: Option<PathBuf>,
    },
    /// Per-image and mean PSNR of a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Verifies hierarchical descent against explicit subdivision.
    SubdivCheck {
        #[arg(long, default_value_t = 4)]
        levels: u32,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plays an animation or a scripted session and prints frame checksums.
    Simulate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, conflicts_with = "script", required_unless_present = "script")]
        anim: Option<PathBuf>,
        /// JSON-lines session messages; `{"type":"tick","count":n}` advances the loop.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        out_frames: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Hosts a live deformation session over a websocket.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long)]
        paused: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    pose: Vec<f64>,
    fov: f64,
    width: u32,
    height: u32,
}

fn read_camera(path: &Path) -> Result<Camera> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let c: CameraFile = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    camera_from_message(&c.pose, c.fov, c.width, c.height).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn default_camera(width: u32, height: u32) -> Camera {
    CameraRig { width, height, ..CameraRig::default() }.test_cameras(1)[0]
}

fn load_ckpt(path: &Path) -> Result<RadianceField> {
    checkpoint::load(path).with_context(|| format!("{}", path.display()))
}

fn progress_line(p: &Progress) -> String {
    let mut s = format!("stage={} iter={} loss={:.6} psnr={:.3} lr={:.6}", p.stage, p.iteration + 1, p.loss, p.psnr, p.lr);
    if let Some(k) = p.kept {
        s += &format!(" kept={k:.4}");
    }
    s
}

fn cmd_gen_grid(spacing: Option<f64>, out: &Path, common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let grid = generate_grid(&TetGridConfig::new(spacing.unwrap_or(config.spacing)))?;
    mesh_io::write_mesh(out, &grid)?;
    println!("vertices={} tets={} out={}", grid.num_vertices(), grid.num_tets(), out.display());
    Ok(())
}

fn cmd_gen_scene(name: &str, out: &Path, train: usize, test: usize, size: u32) -> Result<()> {
    let scene = ProceduralScene::by_name(name).ok_or_else(|| anyhow!("unknown scene `{name}` (sphere, torus, two-box)"))?;
    let rig = CameraRig { width: size, height: size, ..CameraRig::default() };
    for (split, cameras) in [("train", rig.train_cameras(train)), ("test", rig.test_cameras(test))] {
        let ds = scene.dataset(&cameras, 1.0 / 512.0);
        write_split(out, split, &ds)?;
        println!("split={split} views={}", ds.views.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    out: &Path,
    stage1: Option<usize>,
    stage2: Option<usize>,
    levels: Option<usize>,
    single: bool,
    log_every: usize,
    common: &Common,
) -> Result<()> {
    let mut c = common.resolve()?;
    if let Some(n) = stage1 {
        c.train.stage1_iters = n;
    }
    if let Some(n) = stage2 {
        c.train.stage2_iters = n;
    }
    if let Some(l) = levels {
        c.train.levels = l;
    }
    let dataset = load_split(data, "train", c.render.background)?;
    let grid = generate_grid(&TetGridConfig::new(c.spacing))?;
    println!("views={} rays={} grid_tets={} seed={}", dataset.views.len(), dataset.num_rays(), grid.num_tets(), c.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let log_every = log_every.max(1);
    let (s1, s2) = (c.train.stage1_iters, c.train.stage2_iters);
    let t0 = Instant::now();
    let mut progress = |p: &Progress| {
        let total = match (single, p.stage) {
            (true, _) => s1 + s2,
            (false, 1) => s1,
            _ => s2,
        };
        if (p.iteration + 1) % log_every == 0 || p.iteration + 1 == total {
            println!("{} elapsed={:.1}", progress_line(p), t0.elapsed().as_secs_f64());
        }
    };
    let field = if single {
        train_single_stage(&dataset, grid, c.hash, c.render, &c.train, &mut rng, &mut progress)?
    } else {
        let (field, stage1) = train_two_stage(&dataset, grid, c.hash, c.render, &c.train, &mut rng, &mut progress)?;
        println!(
            "kept_tets={} total_tets={} kept_fraction={:.4}",
            stage1.pruned.num_tets(),
            stage1.keep.len(),
            stage1.kept_fraction()
        );
        field
    };
    let mesh_path = checkpoint::save(&field, out)?;
    println!("checkpoint={} mesh={} elapsed={:.1}", out.display(), mesh_path.display(), t0.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_render(ckpt: &Path, camera: Option<&Path>, data: Option<(&Path, &str)>, out: &Path, acc: Option<&Path>) -> Result<()> {
    let field = load_ckpt(ckpt)?;
    let geometry = field.geometry();
    match (camera, data) {
        (Some(cam), None) => {
            let camera = read_camera(cam)?;
            let img = field.render_image(&geometry, &camera);
            save_rgb8(out, img.width, img.height, &img.rgb)?;
            if let Some(acc) = acc {
                save_gray16(acc, img.width, img.height, &img.accumulation)?;
            }
            println!("out={} width={} height={} checksum={}", out.display(), img.width, img.height, pixel_checksum(&rgb8_bytes(&img.rgb)));
        }
        (None, Some((dir, split))) => {
            let source = load_split(dir, split, field.settings.background)?;
            let views: Vec<View> = source
                .views
                .iter()
                .map(|v| View { camera: v.camera, pixels: quantized(&field.render_image(&geometry, &v.camera).rgb), alpha: None })
                .collect();
            write_split(out, split, &Dataset::new(views.clone(), field.settings.background))?;
            println!("out={} split={split} views={}", out.display(), views.len());
        }
        _ => bail!("render needs either --camera or --data with --split"),
    }
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path, split: &str) -> Result<()> {
    let field = load_ckpt(ckpt)?;
    let views = load_split(data, split, field.settings.background)?.views;
    let geometry = field.geometry();
    let mut values = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let rendered = quantized(&field.render_image(&geometry, &v.camera).rgb);
        let a: Vec<[f64; 3]> = rendered.iter().map(|p| p.map(f64::from)).collect();
        let b: Vec<[f64; 3]> = v.pixels.iter().map(|p| p.map(f64::from)).collect();
        let value = psnr(&a, &b);
        println!("image={i} psnr={}", format_psnr(value));
        values.push(value);
    }
    // The mean of per-image PSNR; any infinite image makes it infinite.
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    println!("images={} mean_psnr={}", values.len(), format_psnr(mean));
    Ok(())
}

fn cmd_subdiv_check(levels: u32, points: usize, seed: u64) -> Result<bool> {
    let t0 = Instant::now();
    let r = subdiv_check::run(levels, points, 100, seed)?;
    let verdict = if r.ok() { "PASS" } else { "FAIL" };
    println!("{verdict} {}/{}", r.passed, r.points);
    println!("levels={levels} ties={} max_bary_error={:.3e} elapsed={:.2}", r.ties, r.max_bary_error, t0.elapsed().as_secs_f64());
    Ok(r.ok())
}

fn write_frame(dir: Option<&Path>, frame: &Frame) -> Result<()> {
    if let Some(dir) = dir {
        let path = dir.join(format!("frame_{:05}.png", frame.id));
        let buf = image::RgbImage::from_raw(frame.width, frame.height, frame.rgb.clone()).expect("frame size");
        buf.save(&path).with_context(|| format!("{}", path.display()))?;
    }
    println!("frame={} checksum={}", frame.id, frame.checksum());
    Ok(())
}

fn cmd_simulate(ckpt: &Path, anim: Option<&Path>, script: Option<&Path>, camera: Option<&Path>, out: Option<&Path>, common: &Common) -> Result<()> {
    let c = common.resolve()?;
    let field = load_ckpt(ckpt)?;
    let (w, h) = c.preview;
    let camera = match camera {
        Some(p) => read_camera(p)?,
        None => default_camera(w, h),
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    if let Some(anim) = anim {
        let a = read_animation(anim)?;
        validate_frames(&a.frames, field.mesh.num_vertices()).with_context(|| format!("{}", anim.display()))?;
        for (i, positions) in a.frames.into_iter().enumerate() {
            let ctx = DeformedQueryContext::new(&field.mesh, positions)?;
            let img = render_deformed(&field, &ctx, &camera);
            let frame = Frame { id: i as u64, width: img.width, height: img.height, rgb: rgb8_bytes(&img.rgb) };
            if ctx.inverted_tets() > 0 || img.dropped > 0 {
                println!("frame={i} inverted_tets={} dropped_samples={}", ctx.inverted_tets(), img.dropped);
            }
            write_frame(out, &frame)?;
        }
        return Ok(());
    }
    let script = script.expect("clap enforces --anim or --script");
    let text = fs::read_to_string(script).with_context(|| format!("{}", script.display()))?;
    let records = parse_script(&text).map_err(|e| anyhow!("{}: {e}", script.display()))?;
    let config = SessionConfig { sim: c.sim, preview: c.preview, snapshot: (camera.width, camera.height), pick_radius: c.pick_radius, start_paused: false };
    let mut session = SessionState::new(field, camera, config)?;
    for record in records {
        match record {
            ScriptRecord::Message(msg) => {
                for reply in session.handle_message(1, &msg) {
                    match reply {
                        Outgoing::Text(t) => println!("reply={t}"),
                        Outgoing::Binary(b) => write_frame(out, &Frame::decode(&b)?)?,
                    }
                }
            }
            ScriptRecord::Tick(n) => {
                for _ in 0..n {
                    if let Some(frame) = session.tick()? {
                        write_frame(out, &frame)?;
                    }
                }
            }
        }
    }
    println!("frames={} steps={}", session.frames_emitted(), session.sim.steps);
    Ok(())
}

fn cmd_serve(ckpt: &Path, host: &str, port: u16, fps: f64, paused: bool, common: &Common) -> Result<()> {
    let c = common.resolve()?;
    if !(fps > 0.0 && fps.is_finite()) {
        bail!("--fps must be positive");
    }
    let field = load_ckpt(ckpt)?;
    let camera = default_camera(c.preview.0, c.preview.1);
    let config = SessionConfig { sim: c.sim, preview: c.preview, pick_radius: c.pick_radius, start_paused: paused, ..SessionConfig::default() };
    let session = SessionState::new(field, camera, config)?;
    let server = Server::bind(&format!("{host}:{port}"))?;
    println!("listening=ws://{}", server.local_addr()?);
    server.run(session, Duration::from_secs_f64(1.0 / fps), Arc::new(AtomicBool::new(false)))?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenGrid { spacing, out, common } => cmd_gen_grid(spacing, &out, &common)?,
        Command::GenScene { scene, out, train_views, test_views, size } => cmd_gen_scene(&scene, &out, train_views, test_views, size)?,
        Command::Train { data, out, stage1_iters, stage2_iters, levels, single_stage, log_every, common } => {
            cmd_train(&data, &out, stage1_iters, stage2_iters, levels, single_stage, log_every, &common)?
        }
        Command::Render { ckpt, camera, data, split, out, accumulation } => {
            let data = data.as_deref().zip(split.as_deref());
            cmd_render(&ckpt, camera.as_deref(), data, &out, accumulation.as_deref())?
        }
        Command::Eval { ckpt, data, split } => cmd_eval(&ckpt, &data, &split)?,
        Command::SubdivCheck { levels, points, seed } => return cmd_subdiv_check(levels, points, seed),
        Command::Simulate { ckpt, anim, script, camera, out_frames, common } => {
            cmd_simulate(&ckpt, anim.as_deref(), script.as_deref(), camera.as_deref(), out_frames.as_deref(), &common)?
        }
        Command::Serve { ckpt, port, host, fps, paused, common } => cmd_serve(&ckpt, &host, port, fps, paused, &common)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
