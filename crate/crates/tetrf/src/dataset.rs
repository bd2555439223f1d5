//! NeRF-synthetic style datasets: a `transforms_<split>.json` file of
//! camera-to-world matrices plus one image per frame.
//!
//! Poses are mapped into the unit cube as `p * scene_scale + scene_offset`.
//! Both keys are optional and default to `1/3` and `0.5`, which takes the
//! usual `[-1.5, 1.5]^3` synthetic-scene bounds to `[0, 1]^3`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tetrf_core::field::train::{Dataset, View};
use tetrf_core::{Camera, Mat4, Vec3};
use thiserror::Error;

use crate::images;

pub const DEFAULT_SCENE_SCALE: f64 = 1.0 / 3.0;
pub const DEFAULT_SCENE_OFFSET: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
    #[error("{path}: frame {frame}: {msg}")]
    Frame { path: String, frame: usize, msg: String },
    #[error("{0}: no frames")]
    Empty(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformsFile {
    pub camera_angle_x: f64,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_offset: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
}

pub fn transforms_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("transforms_{split}.json"))
}

fn image_path(dir: &Path, file_path: &str) -> PathBuf {
    let p = dir.join(file_path);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

/// Camera-to-world matrix after mapping the scene into the unit cube.
fn normalized_pose(m: &[[f64; 4]; 4], scale: f64, offset: f64) -> Result<Mat4, String> {
    let flat: [f64; 16] = core::array::from_fn(|i| m[i / 4][i % 4]);
    if !flat.iter().all(|v| v.is_finite()) {
        return Err("non-finite transform".into());
    }
    let pose = Mat4::from_row_major(&flat);
    let rot = pose.rotation();
    let t = pose.translation() * scale + Vec3::splat(offset);
    Ok(Mat4::from_rotation_translation(&rot, t))
}

/// Loads the `split` views of the dataset in `dir`.
pub fn load_split(dir: &Path, split: &str, background: [f64; 3]) -> Result<Dataset, DatasetError> {
    let path = transforms_path(dir, split);
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: shown.clone(), source })?;
    let file: TransformsFile = serde_json::from_str(&text).map_err(|source| DatasetError::Json { path: shown.clone(), source })?;
    if file.frames.is_empty() {
        return Err(DatasetError::Empty(shown));
    }
    let scale = file.scene_scale.unwrap_or(DEFAULT_SCENE_SCALE);
    let offset = file.scene_offset.unwrap_or(DEFAULT_SCENE_OFFSET);
    let mut views = Vec::with_capacity(file.frames.len());
    for (i, frame) in file.frames.iter().enumerate() {
        let frame_err = |msg: String| DatasetError::Frame { path: shown.clone(), frame: i, msg };
        let pose = normalized_pose(&frame.transform_matrix, scale, offset).map_err(frame_err)?;
        let img = image_path(dir, &frame.file_path);
        let loaded = images::load_composited(&img, background)
            .map_err(|source| DatasetError::Image { path: img.display().to_string(), source })?;
        let camera = Camera::from_fov_x(pose, file.camera_angle_x, loaded.width, loaded.height);
        views.push(View { camera, pixels: loaded.pixels, alpha: loaded.alpha });
    }
    Ok(Dataset::new(views, background))
}

/// Straight color of a pixel composited on `background` with opacity `a`.
fn uncomposite(p: [f64; 3], a: f64, background: [f64; 3]) -> [f64; 3] {
    if a <= 0.0 {
        return [0.0; 3];
    }
    core::array::from_fn(|c| (p[c] - (1.0 - a) * background[c]) / a)
}

/// Writes `dataset` as split `split` under `dir` (images in `dir/<split>/`),
/// with poses already in unit-cube coordinates. Views with alpha are
/// stored as RGBA, the rest as RGB.
pub fn write_split(dir: &Path, split: &str, dataset: &Dataset) -> Result<(), DatasetError> {
    let views = &dataset.views;
    let sub = dir.join(split);
    std::fs::create_dir_all(&sub).map_err(|source| DatasetError::Io { path: sub.display().to_string(), source })?;
    let fov = views.first().map_or(0.0, |v| v.camera.fov_x());
    let mut frames = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let name = format!("r_{i}");
        let img = sub.join(format!("{name}.png"));
        let rgb: Vec<[f64; 3]> = v.pixels.iter().map(|p| p.map(f64::from)).collect();
        let (w, h) = (v.camera.width, v.camera.height);
        let saved = match &v.alpha {
            Some(alpha) => {
                let alpha: Vec<f64> = alpha.iter().map(|&a| f64::from(a)).collect();
                let straight: Vec<[f64; 3]> = rgb.iter().zip(&alpha).map(|(&p, &a)| uncomposite(p, a, dataset.background)).collect();
                images::save_rgba8(&img, w, h, &straight, &alpha)
            }
            None => images::save_rgb8(&img, w, h, &rgb),
        };
        saved.map_err(|source| DatasetError::Image { path: img.display().to_string(), source })?;
        let m = v.camera.camera_to_world.to_row_major();
        frames.push(FrameEntry {
            file_path: format!("./{split}/{name}"),
            transform_matrix: core::array::from_fn(|r| core::array::from_fn(|c| m[4 * r + c])),
        });
    }
    let file = TransformsFile { camera_angle_x: fov, frames, scene_scale: Some(1.0), scene_offset: Some(0.0) };
    let path = transforms_path(dir, split);
    let json = serde_json::to_string_pretty(&file).expect("transforms serialize");
    std::fs::write(&path, json).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tetrf_core::scene::CameraRig;

    #[test]
    fn default_normalization_maps_synthetic_bounds() {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = 1.0;
        }
        m[0][3] = 1.5;
        m[1][3] = -1.5;
        let pose = normalized_pose(&m, DEFAULT_SCENE_SCALE, DEFAULT_SCENE_OFFSET).unwrap();
        let t = pose.translation();
        assert!((t.x - 1.0).abs() < 1e-15 && t.y.abs() < 1e-15 && (t.z - 0.5).abs() < 1e-15);
    }

    #[test]
    fn write_then_load_preserves_cameras() {
        let dir = tempfile::tempdir().unwrap();
        let rig = CameraRig { width: 8, height: 6, ..CameraRig::default() };
        let views: Vec<View> = rig
            .train_cameras(3)
            .into_iter()
            .map(|camera| View { camera, pixels: vec![[0.2, 0.4, 0.6]; 48], alpha: None })
            .collect();
        write_split(dir.path(), "train", &Dataset::new(views.clone(), [1.0; 3])).unwrap();
        let back = load_split(dir.path(), "train", [1.0; 3]).unwrap();
        assert_eq!(back.views.len(), 3);
        for (a, b) in views.iter().zip(&back.views) {
            assert_eq!((a.camera.width, a.camera.height), (b.camera.width, b.camera.height));
            assert!((a.camera.fx - b.camera.fx).abs() < 1e-9);
            assert_eq!(a.camera.camera_to_world, b.camera.camera_to_world);
            let expect = images::quantized(&[[0.2, 0.4, 0.6]])[0];
            assert!(b.pixels.iter().all(|p| *p == expect));
        }
    }

    #[test]
    fn alpha_is_composited_onto_background() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("test")).unwrap();
        let img = image::RgbaImage::from_raw(1, 1, vec![0, 0, 0, 0]).unwrap();
        img.save(dir.path().join("test/r_0.png")).unwrap();
        let json = r#"{"camera_angle_x": 0.69, "frames": [{"file_path": "./test/r_0",
            "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]]}]}"#;
        std::fs::write(transforms_path(dir.path(), "test"), json).unwrap();
        let ds = load_split(dir.path(), "test", [1.0, 0.5, 0.0]).unwrap();
        assert_eq!(ds.views[0].pixels, vec![[1.0, 0.5, 0.0]]);
        let t = ds.views[0].camera.position();
        assert!((t.z - (4.0 / 3.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn alpha_survives_a_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rig = CameraRig { width: 2, height: 1, ..CameraRig::default() };
        // Red at half opacity over white, and empty space.
        let view = View { camera: rig.train_cameras(1)[0], pixels: vec![[1.0, 0.5, 0.5], [1.0; 3]], alpha: Some(vec![0.5, 0.0]) };
        write_split(dir.path(), "train", &Dataset::new(vec![view], [1.0; 3])).unwrap();
        let back = load_split(dir.path(), "train", [0.0; 3]).unwrap();
        let v = &back.views[0];
        assert_eq!(v.alpha.as_ref().unwrap()[1], 0.0);
        assert!((v.alpha.as_ref().unwrap()[0] - 0.5).abs() < 0.003);
        assert!((v.pixels[0][0] - 0.5).abs() < 0.003 && v.pixels[0][1].abs() < 1e-6);
        assert_eq!(v.pixels[1], [0.0; 3]);
    }

    #[test]
    fn missing_image_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"camera_angle_x": 0.69, "frames": [{"file_path": "nope.png",
            "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]]}]}"#;
        std::fs::write(transforms_path(dir.path(), "train"), json).unwrap();
        assert!(matches!(load_split(dir.path(), "train", [1.0; 3]), Err(DatasetError::Image { .. })));
    }
}
