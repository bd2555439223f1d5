//! Run configuration: built-in defaults, overlaid by an optional
//! `key = value` file, overlaid by command-line flags.

use std::path::Path;
use std::str::FromStr;

use tetrf_core::deform::SimConfig;
use tetrf_core::encoding::HashConfig;
use tetrf_core::field::train::TrainConfig;
use tetrf_core::{RenderSettings, TetGridConfig, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
}

/// Everything a command may need, with one global seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub spacing: f64,
    pub hash: HashConfig,
    pub render: RenderSettings,
    pub train: TrainConfig,
    pub sim: SimConfig,
    /// Live-session preview resolution.
    pub preview: (u32, u32),
    /// Screen-space pick radius in pixels.
    pub pick_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            spacing: TetGridConfig::new(0.02).spacing,
            hash: HashConfig::default(),
            render: RenderSettings::default(),
            train: TrainConfig::default(),
            sim: SimConfig::default(),
            preview: (256, 256),
            pick_radius: 8.0,
        }
    }
}

/// All recognized keys, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "spacing",
    "table_size_log2",
    "feature_dim",
    "base_scale",
    "levels",
    "stage1_levels",
    "stage1_iters",
    "stage2_iters",
    "batch_rays",
    "chunk_rays",
    "jitter",
    "random_background",
    "lr",
    "lr_min",
    "occupancy_period",
    "occupancy_samples",
    "occupancy_decay",
    "occupancy_threshold",
    "occupancy_min_updates",
    "step",
    "min_transmittance",
    "background",
    "dt",
    "substeps",
    "gravity",
    "edge_compliance",
    "volume_compliance",
    "handle_compliance",
    "damping",
    "preview_width",
    "preview_height",
    "pick_radius",
];

fn num<T: FromStr>(v: &str) -> Option<T> {
    v.parse().ok()
}

fn triple(v: &str) -> Option<[f64; 3]> {
    let parts: Vec<f64> = v.split([',', ' ']).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, _>>().ok()?;
    parts.try_into().ok()
}

impl RunConfig {
    /// Applies one setting. `Err(true)` means the key is unknown, `Err(false)`
    /// that the value did not parse.
    fn apply(&mut self, key: &str, value: &str) -> Result<(), bool> {
        let ok = |o: Option<()>| o.ok_or(false);
        match key {
            "seed" => ok(num(value).map(|v| self.seed = v)),
            "spacing" => ok(num(value).map(|v| self.spacing = v)),
            "table_size_log2" => ok(num::<u32>(value).filter(|&v| v < 32).map(|v| self.hash.table_size = 1 << v)),
            "feature_dim" => ok(num(value).map(|v| self.hash.feature_dim = v)),
            "base_scale" => ok(num(value).map(|v| self.hash.base_scale = v)),
            "levels" => ok(num(value).map(|v| self.train.levels = v)),
            "stage1_levels" => ok(num(value).map(|v| self.train.stage1_levels = v)),
            "stage1_iters" => ok(num(value).map(|v| self.train.stage1_iters = v)),
            "stage2_iters" => ok(num(value).map(|v| self.train.stage2_iters = v)),
            "batch_rays" => ok(num(value).map(|v| self.train.batch_rays = v)),
            "chunk_rays" => ok(num(value).map(|v| self.train.chunk_rays = v)),
            "jitter" => ok(num(value).map(|v| self.train.jitter = v)),
            "random_background" => ok(num(value).map(|v| self.train.random_background = v)),
            "lr" => ok(num(value).map(|v| self.train.adam.lr = v)),
            "lr_min" => ok(num(value).map(|v| self.train.lr_min = v)),
            "occupancy_period" => ok(num(value).map(|v| self.train.occupancy_period = v)),
            "occupancy_samples" => ok(num(value).map(|v| self.train.occupancy_samples = v)),
            "occupancy_decay" => ok(num(value).map(|v| self.train.occupancy_decay = v)),
            "occupancy_threshold" => ok(num(value).map(|v| self.train.occupancy_threshold = v)),
            "occupancy_min_updates" => ok(num(value).map(|v| self.train.occupancy_min_updates = v)),
            "step" => ok(num(value).map(|v| self.render.step = v)),
            "min_transmittance" => ok(num(value).map(|v| self.render.min_transmittance = v)),
            "background" => ok(triple(value).map(|v| self.render.background = v)),
            "dt" => ok(num(value).map(|v| self.sim.dt = v)),
            "substeps" => ok(num(value).map(|v| self.sim.substeps = v)),
            "gravity" => ok(triple(value).map(|v| self.sim.gravity = Vec3::from_array(v))),
            "edge_compliance" => ok(num(value).map(|v| self.sim.edge_compliance = v)),
            "volume_compliance" => ok(num(value).map(|v| self.sim.volume_compliance = v)),
            "handle_compliance" => ok(num(value).map(|v| self.sim.handle_compliance = v)),
            "damping" => ok(num(value).map(|v| self.sim.damping = v)),
            "preview_width" => ok(num(value).map(|v| self.preview.0 = v)),
            "preview_height" => ok(num(value).map(|v| self.preview.1 = v)),
            "pick_radius" => ok(num(value).map(|v| self.pick_radius = v)),
            _ => Err(true),
        }
    }

    /// Overlays `key = value` lines; `#` starts a comment.
    pub fn overlay_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(i + 1, key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn overlay_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        self.overlay_text(&text)
    }

    /// Sets one key; `line` is reported in errors (0 for flags).
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        self.apply(key, value).map_err(|unknown| {
            if unknown {
                ConfigError::UnknownKey { line, key: key.to_string() }
            } else {
                ConfigError::Value { line, key: key.to_string(), value: value.to_string() }
            }
        })
    }

    /// Hash configuration with the final level count.
    pub fn final_hash(&self) -> HashConfig {
        self.hash.with_levels(self.train.levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_and_set_overrides_file() {
        let mut c = RunConfig::default();
        c.overlay_text("# desk\nstage1_iters = 10\nlevels=4  # trailing comment\nbackground = 0, 0.5, 1\n").unwrap();
        assert_eq!(c.train.stage1_iters, 10);
        assert_eq!(c.train.levels, 4);
        assert_eq!(c.render.background, [0.0, 0.5, 1.0]);
        assert_eq!(c.train.stage2_iters, TrainConfig::default().stage2_iters);
        c.set(0, "levels", "6").unwrap();
        assert_eq!(c.train.levels, 6);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        for key in KEYS {
            let value = match *key {
                "background" | "gravity" => "0,0,0",
                "jitter" | "random_background" => "true",
                _ => "3",
            };
            RunConfig::default().set(1, key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn shipped_desk_config_parses() {
        let mut c = RunConfig::default();
        c.overlay_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf")).unwrap();
        assert_eq!((c.spacing, c.hash.table_size, c.train.stage2_iters), (0.05, 1 << 19, 6000));
        assert_eq!(c.render.step, 1.0 / 128.0);
    }

    #[test]
    fn bad_input_is_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(c.overlay_text("\nnot_a_key = 1\n"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(c.overlay_text("levels = many"), Err(ConfigError::Value { line: 1, .. })));
        assert!(matches!(c.overlay_text("levels 3"), Err(ConfigError::Syntax { line: 1 })));
    }
}
