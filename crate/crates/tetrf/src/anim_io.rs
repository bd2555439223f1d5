//! Baked vertex-trajectory animations (`tetanim` text files).
//!
//! ```text
//! tetanim 1
//! frames <n> vertices <m>
//! <x> <y> <z>     (n blocks of m lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use tetrf_core::Vec3;
use thiserror::Error;

use crate::mesh_io::{content_lines, parse_fields, MeshFileError};

#[derive(Debug, Error)]
pub enum AnimError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported tetanim version {0}")]
    Version(u32),
}

impl From<MeshFileError> for AnimError {
    fn from(e: MeshFileError) -> Self {
        match e {
            MeshFileError::Parse { line, msg } => AnimError::Parse { line, msg },
            other => AnimError::Parse { line: 0, msg: other.to_string() },
        }
    }
}

/// Decoded frames, each a full vertex array.
#[derive(Debug, Clone, PartialEq)]
pub struct Animation {
    pub frames: Vec<Vec<Vec3>>,
}

impl Animation {
    pub fn vertices(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

pub fn parse_animation(text: &str) -> Result<Animation, AnimError> {
    let mut lines = content_lines(text);
    let end = text.lines().count() + 1;
    let eof = |what: &str| AnimError::Parse { line: end, msg: format!("unexpected end of file, expected {what}") };
    let (ln, head) = lines.next().ok_or_else(|| eof("header"))?;
    let mut it = head.split_whitespace();
    if it.next() != Some("tetanim") {
        return Err(AnimError::Parse { line: ln, msg: "missing `tetanim` header".into() });
    }
    let version: u32 = it.next().and_then(|v| v.parse().ok()).ok_or(AnimError::Parse { line: ln, msg: "missing version".into() })?;
    if version != 1 {
        return Err(AnimError::Version(version));
    }
    let (ln, counts) = lines.next().ok_or_else(|| eof("frame counts"))?;
    let tok: Vec<&str> = counts.split_whitespace().collect();
    let (n, m) = match tok.as_slice() {
        ["frames", n, "vertices", m] => match (n.parse::<usize>(), m.parse::<usize>()) {
            (Ok(n), Ok(m)) => (n, m),
            _ => return Err(AnimError::Parse { line: ln, msg: "invalid frame or vertex count".into() }),
        },
        _ => return Err(AnimError::Parse { line: ln, msg: "expected `frames <n> vertices <m>`".into() }),
    };
    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let mut frame = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or_else(|| eof(&format!("vertex of frame {f}")))?;
            let [x, y, z] = parse_fields::<f64, 3>(ln, l, "coordinate")?;
            if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                return Err(AnimError::Parse { line: ln, msg: format!("non-finite position in frame {f}") });
            }
            frame.push(Vec3::new(x, y, z));
        }
        frames.push(frame);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(AnimError::Parse { line: ln, msg: "trailing content after the last frame".into() });
    }
    Ok(Animation { frames })
}

pub fn format_animation(anim: &Animation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tetanim 1\nframes {} vertices {}", anim.frames.len(), anim.vertices());
    for f in &anim.frames {
        for p in f {
            let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
        }
    }
    s
}

pub fn read_animation(path: &Path) -> Result<Animation, AnimError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnimError::Io { path: path.display().to_string(), source })?;
    parse_animation(&text)
}

pub fn write_animation(path: &Path, anim: &Animation) -> Result<(), AnimError> {
    std::fs::write(path, format_animation(anim)).map_err(|source| AnimError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Animation {
        Animation {
            frames: vec![
                vec![Vec3::ZERO, Vec3::new(1.0, 0.5, 0.25)],
                vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(1.1, 0.5, 0.25)],
            ],
        }
    }

    #[test]
    fn roundtrip() {
        let a = sample();
        assert_eq!(parse_animation(&format_animation(&a)).unwrap(), a);
    }

    #[test]
    fn truncated_file_fails() {
        let text = format_animation(&sample());
        let cut: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_animation(&cut), Err(AnimError::Parse { .. })));
    }

    #[test]
    fn trailing_garbage_fails() {
        let text = format_animation(&sample()) + "0 0 0\n";
        assert!(matches!(parse_animation(&text), Err(AnimError::Parse { line: 7, .. })));
    }
}
