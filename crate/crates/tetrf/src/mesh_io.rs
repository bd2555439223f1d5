//! Plain-text `.tetmesh` files.
//!
//! ```text
//! tetmesh 1
//! v <vertex count>
//! <x> <y> <z>          (one line per vertex)
//! t <tet count>
//! <a> <b> <c> <d>      (one line per tet, positively oriented)
//! ```
//!
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use tetrf_core::tetmesh::MeshError;
use tetrf_core::{TetMesh, Vec3};
use thiserror::Error;

pub const MESH_MAGIC: &str = "tetmesh";
pub const MESH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MeshFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported tetmesh version {0}")]
    Version(u32),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshFileError {
    MeshFileError::Parse { line, msg: msg.into() }
}

/// Significant lines with their 1-based numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub(crate) fn parse_fields<T: std::str::FromStr, const N: usize>(line: usize, text: &str, what: &str) -> Result<[T; N], MeshFileError> {
    let mut out = Vec::with_capacity(N);
    for tok in text.split_whitespace() {
        out.push(tok.parse::<T>().map_err(|_| parse_err(line, format!("invalid {what} value `{tok}`")))?);
    }
    let n = out.len();
    out.try_into().map_err(|_| parse_err(line, format!("expected {N} {what} values, found {n}")))
}

fn header_count(line: usize, text: &str, key: &str) -> Result<usize, MeshFileError> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(n), None) if k == key => n.parse().map_err(|_| parse_err(line, format!("invalid {key} count `{n}`"))),
        _ => Err(parse_err(line, format!("expected `{key} <count>`"))),
    }
}

pub fn parse_mesh(text: &str) -> Result<TetMesh, MeshFileError> {
    let mut lines = content_lines(text);
    let eof = |what: &str| parse_err(text.lines().count() + 1, format!("unexpected end of file, expected {what}"));
    let (ln, head) = lines.next().ok_or_else(|| eof("header"))?;
    let mut it = head.split_whitespace();
    if it.next() != Some(MESH_MAGIC) {
        return Err(parse_err(ln, "missing `tetmesh` header"));
    }
    let version: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(ln, "missing version"))?;
    if version != MESH_VERSION {
        return Err(MeshFileError::Version(version));
    }
    let (ln, l) = lines.next().ok_or_else(|| eof("vertex count"))?;
    let nv = header_count(ln, l, "v")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| eof("vertex"))?;
        let [x, y, z] = parse_fields::<f64, 3>(ln, l, "coordinate")?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        vertices.push(Vec3::new(x, y, z));
    }
    let (ln, l) = lines.next().ok_or_else(|| eof("tet count"))?;
    let nt = header_count(ln, l, "t")?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next().ok_or_else(|| eof("tet"))?;
        tets.push(parse_fields::<u32, 4>(ln, l, "index")?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after the last tet"));
    }
    Ok(TetMesh::new(vertices, tets)?)
}

pub fn format_mesh(mesh: &TetMesh) -> String {
    let mut s = String::with_capacity(48 * mesh.num_vertices() + 32 * mesh.num_tets());
    let _ = writeln!(s, "{MESH_MAGIC} {MESH_VERSION}");
    let _ = writeln!(s, "v {}", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "t {}", mesh.num_tets());
    for t in mesh.tets() {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    s
}

pub fn read_mesh(path: &Path) -> Result<TetMesh, MeshFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshFileError::Io { path: path.display().to_string(), source })?;
    parse_mesh(&text)
}

pub fn write_mesh(path: &Path, mesh: &TetMesh) -> Result<(), MeshFileError> {
    std::fs::write(path, format_mesh(mesh)).map_err(|source| MeshFileError::Io { path: path.display().to_string(), source })
}
