//! Single-file binary checkpoints.
//!
//! Layout (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `TRFCKPT\0` |
//! | 4     | format version (`u32`) |
//! | 8     | body length (`u64`) |
//! | n     | body |
//! | 32    | SHA-256 of the body |
//!
//! The body is a length-prefixed JSON header (configuration, companion mesh
//! path and digest, array lengths) followed by the raw `f64` MLP parameters
//! and feature tables. The mesh itself lives in a separate `.tetmesh` file;
//! its path is stored relative to the checkpoint so a checkpoint directory
//! can be moved as a whole, and its digest guards against a swapped mesh.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tetrf_core::encoding::{EncodingError, FeatureBank, HashConfig};
use tetrf_core::field::mlp::MlpParams;
use tetrf_core::field::FieldError;
use tetrf_core::{RadianceField, RenderSettings};
use thiserror::Error;

use crate::mesh_io::{format_mesh, parse_mesh, MeshFileError};

pub const MAGIC: &[u8; 8] = b"TRFCKPT\0";
pub const VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("companion mesh {0} is missing")]
    MissingMesh(String),
    #[error("companion mesh {path} does not match the checkpoint (sha256 {found}, expected {expected})")]
    MeshHashMismatch { path: String, expected: String, found: String },
    #[error("companion mesh: {0}")]
    Mesh(#[from] MeshFileError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    table_size: usize,
    feature_dim: usize,
    levels: usize,
    base_scale: f64,
    primes: [u32; 3],
    background: [f64; 3],
    step: f64,
    min_transmittance: f64,
    mesh_path: String,
    mesh_sha256: String,
    mlp_inputs: usize,
    mlp_params: usize,
    table_values: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialized checkpoint bytes for `field`, referencing its mesh at
/// `mesh_path` (stored verbatim) with the digest of `mesh_text`.
pub fn encode(field: &RadianceField, mesh_path: &str, mesh_text: &str) -> Vec<u8> {
    let h = field.config();
    let s = &field.settings;
    let header = Header {
        table_size: h.table_size,
        feature_dim: h.feature_dim,
        levels: h.levels,
        base_scale: h.base_scale,
        primes: h.primes,
        background: s.background,
        step: s.step,
        min_transmittance: s.min_transmittance,
        mesh_path: mesh_path.to_string(),
        mesh_sha256: sha256_hex(mesh_text.as_bytes()),
        mlp_inputs: field.mlp.in_dim(),
        mlp_params: field.mlp.params.len(),
        table_values: field.bank.tables.len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut body = Vec::with_capacity(4 + json.len() + 8 * (header.mlp_params + header.table_values));
    body.extend_from_slice(&(json.len() as u32).to_le_bytes());
    body.extend_from_slice(&json);
    for v in field.mlp.params.iter().chain(&field.bank.tables) {
        body.extend_from_slice(&v.to_le_bytes());
    }
    let mut out = Vec::with_capacity(PREFIX + body.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&Sha256::digest(&body));
    out
}

/// Everything in a checkpoint except the mesh.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub hash: HashConfig,
    pub settings: RenderSettings,
    pub mesh_path: String,
    pub mesh_sha256: String,
    pub mlp: MlpParams,
    pub tables: Vec<f64>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < PREFIX {
        return Err(CheckpointError::Corrupt("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let body_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected_len = (PREFIX as u64).checked_add(body_len).and_then(|n| n.checked_add(32));
    if expected_len != Some(bytes.len() as u64) {
        return Err(CheckpointError::Corrupt(format!("length {} does not match declared body of {body_len} bytes", bytes.len())));
    }
    let body = &bytes[PREFIX..PREFIX + body_len as usize];
    if Sha256::digest(body).as_slice() != &bytes[PREFIX + body.len()..] {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()));
    }
    if body.len() < 4 {
        return Err(CheckpointError::Corrupt("missing header".into()));
    }
    let json_len = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
    let json = body.get(4..4 + json_len).ok_or_else(|| CheckpointError::Corrupt("header overruns body".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let data = &body[4 + json_len..];
    let values = header.mlp_params.checked_add(header.table_values).and_then(|n| n.checked_mul(8));
    if values != Some(data.len()) {
        return Err(CheckpointError::Corrupt("parameter payload has the wrong length".into()));
    }
    let floats: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (mlp, tables) = floats.split_at(header.mlp_params);
    let mlp = MlpParams::from_params(header.mlp_inputs, mlp.to_vec())
        .ok_or_else(|| CheckpointError::Corrupt("MLP parameter count does not match its input width".into()))?;
    let hash = HashConfig {
        table_size: header.table_size,
        feature_dim: header.feature_dim,
        levels: header.levels,
        base_scale: header.base_scale,
        primes: header.primes,
    };
    hash.validate()?;
    if tables.len() != hash.levels * hash.table_size * hash.feature_dim {
        return Err(CheckpointError::Corrupt("feature table size does not match the hash config".into()));
    }
    let settings = RenderSettings { background: header.background, step: header.step, min_transmittance: header.min_transmittance };
    Ok(Decoded { hash, settings, mesh_path: header.mesh_path, mesh_sha256: header.mesh_sha256, mlp, tables: tables.to_vec() })
}

/// Companion mesh path for a checkpoint written to `ckpt`.
pub fn mesh_path_for(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("tetmesh")
}

/// Writes `field` to `ckpt` and its mesh next to it (see [`mesh_path_for`]).
pub fn save(field: &RadianceField, ckpt: &Path) -> Result<PathBuf, CheckpointError> {
    let mesh_path = mesh_path_for(ckpt);
    let mesh_text = format_mesh(&field.mesh);
    std::fs::write(&mesh_path, &mesh_text).map_err(io_err(&mesh_path))?;
    let name = mesh_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    std::fs::write(ckpt, encode(field, &name, &mesh_text)).map_err(io_err(ckpt))?;
    Ok(mesh_path)
}

/// Loads a checkpoint and its companion mesh, verifying the mesh digest.
pub fn load(ckpt: &Path) -> Result<RadianceField, CheckpointError> {
    let bytes = std::fs::read(ckpt).map_err(io_err(ckpt))?;
    let d = decode(&bytes)?;
    let mesh_path = ckpt.parent().unwrap_or(Path::new("")).join(&d.mesh_path);
    if !mesh_path.is_file() {
        return Err(CheckpointError::MissingMesh(mesh_path.display().to_string()));
    }
    let mesh_text = std::fs::read_to_string(&mesh_path).map_err(io_err(&mesh_path))?;
    let found = sha256_hex(mesh_text.as_bytes());
    if found != d.mesh_sha256 {
        return Err(CheckpointError::MeshHashMismatch { path: mesh_path.display().to_string(), expected: d.mesh_sha256, found });
    }
    let mesh = parse_mesh(&mesh_text)?;
    let bank = FeatureBank::from_tables(d.hash, d.tables)?;
    Ok(RadianceField::from_parts(mesh, bank, d.mlp, d.settings)?)
}
