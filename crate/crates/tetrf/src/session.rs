//! Live deformation session: message schema, frame encoding and the state
//! machine behind the websocket server.
//!
//! [`SessionState`] is transport-agnostic. It consumes client messages as
//! text, advances the simulation one frame per [`SessionState::tick`], and
//! produces replies and binary frames. Given the same initial state and
//! the same message log it produces the same frames.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tetrf_core::deform::{render_deformed, DeformedQueryContext, DragHandle, SimConfig, SimError, SimState};
use tetrf_core::{Camera, Mat4, RadianceField, Vec3};
use thiserror::Error;

use crate::images::rgb8_bytes;

pub const FRAME_MAGIC: &[u8; 4] = b"TFRM";
pub const FORMAT_RGB8: u8 = 0;
pub const FRAME_HEADER_LEN: usize = 4 + 8 + 4 + 4 + 1;
/// Tolerance for accepting a camera rotation as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Identifies a connection; handles are owned by the client that picked them.
pub type ClientId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Pick { px: f64, py: f64 },
    Drag { handle: u32, px: f64, py: f64 },
    Release { handle: u32 },
    Camera { pose: Vec<f64>, fov: f64 },
    Pause,
    Resume,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Picked { vertex: u32, handle: u32 },
    Error { msg: String },
    Warning { msg: String },
    Mesh { vertices: Vec<[f64; 3]>, edges: Vec<[u32; 2]> },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// One rendered frame as sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB8.
    pub rgb: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame shorter than its {FRAME_HEADER_LEN}-byte header")]
    Short,
    #[error("bad frame magic")]
    Magic,
    #[error("unsupported pixel format {0}")]
    Format(u8),
    #[error("payload of {got} bytes does not match {width}x{height} RGB8")]
    Payload { width: u32, height: u32, got: usize },
}

impl Frame {
    /// Header (magic, id, width, height, format; little-endian) + payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.rgb.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(FORMAT_RGB8);
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(FrameError::Short);
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err(FrameError::Magic);
        }
        let id = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let width = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if bytes[20] != FORMAT_RGB8 {
            return Err(FrameError::Format(bytes[20]));
        }
        let rgb = bytes[FRAME_HEADER_LEN..].to_vec();
        if rgb.len() as u64 != 3 * width as u64 * height as u64 {
            return Err(FrameError::Payload { width, height, got: rgb.len() });
        }
        Ok(Frame { id, width, height, rgb })
    }

    /// SHA-256 of the pixel payload, as lowercase hex.
    pub fn checksum(&self) -> String {
        pixel_checksum(&self.rgb)
    }
}

pub fn pixel_checksum(rgb8: &[u8]) -> String {
    Sha256::digest(rgb8).iter().map(|b| format!("{b:02x}")).collect()
}

/// Outgoing payloads in send order.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Text(String),
    Binary(Vec<u8>),
}

impl Outgoing {
    fn msg(m: ServerMessage) -> Self {
        Outgoing::Text(m.to_json())
    }
}

/// Validates a row-major camera-to-world pose and horizontal field of view
/// in degrees.
pub fn camera_from_message(pose: &[f64], fov_deg: f64, width: u32, height: u32) -> Result<Camera, String> {
    let pose: &[f64; 16] = pose.try_into().map_err(|_| format!("pose must have 16 numbers, got {}", pose.len()))?;
    if !pose.iter().all(|v| v.is_finite()) || !fov_deg.is_finite() {
        return Err("pose and fov must be finite".into());
    }
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(format!("fov {fov_deg} outside (0, 180) degrees"));
    }
    if pose[12..] != [0.0, 0.0, 0.0, 1.0] {
        return Err("last pose row must be 0 0 0 1".into());
    }
    let m = Mat4::from_row_major(pose);
    let r = m.rotation();
    let rtr = r.transpose().mul_mat(&r);
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (rtr.rows[i][j] - expect).abs() > ORTHONORMAL_TOL {
                return Err("pose rotation is not orthonormal".into());
            }
        }
    }
    if r.determinant() < 0.0 {
        return Err("pose rotation is a reflection".into());
    }
    Ok(Camera::from_fov_x(m, fov_deg.to_radians(), width, height))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ActiveHandle {
    owner: ClientId,
    vertex: u32,
    /// Camera depth of the vertex when it was picked.
    depth: f64,
    target: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub sim: SimConfig,
    pub preview: (u32, u32),
    /// Resolution of `snapshot` stills.
    pub snapshot: (u32, u32),
    pub pick_radius: f64,
    pub start_paused: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { sim: SimConfig::default(), preview: (256, 256), snapshot: (512, 512), pick_radius: 8.0, start_paused: false }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub struct SessionState {
    pub field: RadianceField,
    pub sim: SimState,
    /// Current view at preview resolution.
    pub camera: Camera,
    pub config: SessionConfig,
    pub paused: bool,
    handles: BTreeMap<u32, ActiveHandle>,
    next_handle: u32,
    next_frame: u64,
    dirty: bool,
}

impl SessionState {
    /// Starts a session with the bottom layer of vertices pinned.
    pub fn new(field: RadianceField, camera: Camera, config: SessionConfig) -> Result<Self, SessionError> {
        let mut sim = SimState::from_mesh(&field.mesh, config.sim)?;
        let zmin = field.mesh.vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
        let eps = 1e-9 * field.mesh.bounds().diagonal();
        for (i, v) in field.mesh.vertices().iter().enumerate() {
            if v.z <= zmin + eps {
                sim.pin(i as u32);
            }
        }
        let camera = camera.with_resolution(config.preview.0, config.preview.1);
        Ok(SessionState {
            field,
            sim,
            camera,
            paused: config.start_paused,
            config,
            handles: BTreeMap::new(),
            next_handle: 1,
            next_frame: 0,
            dirty: true,
        })
    }

    pub fn frames_emitted(&self) -> u64 {
        self.next_frame
    }

    pub fn handle_count(&self) -> usize {
        self.handles.len()
    }

    /// The overlay message describing the current coarse mesh.
    pub fn mesh_message(&self) -> ServerMessage {
        ServerMessage::Mesh {
            vertices: self.sim.positions.iter().map(|p| p.to_array()).collect(),
            edges: self.field.mesh.unique_edges(),
        }
    }

    /// Nearest vertex to pixel `(px, py)` within the pick radius, with its
    /// camera depth. Ties in screen distance go to the vertex nearer the
    /// camera, then to the lower index.
    pub fn pick_vertex(&self, px: f64, py: f64) -> Option<(u32, f64)> {
        let r2 = self.config.pick_radius * self.config.pick_radius;
        let mut best: Option<(f64, f64, u32)> = None;
        for (i, &p) in self.sim.positions.iter().enumerate() {
            let Some((x, y, depth)) = self.camera.project(p) else { continue };
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 > r2 {
                continue;
            }
            let cand = (d2, depth, i as u32);
            if best.map_or(true, |b| (cand.0, cand.1) < (b.0, b.1)) {
                best = Some(cand);
            }
        }
        best.map(|(_, depth, v)| (v, depth))
    }

    fn error(msg: impl Into<String>) -> Vec<Outgoing> {
        vec![Outgoing::msg(ServerMessage::Error { msg: msg.into() })]
    }

    /// Parses and applies one text message from `client`.
    pub fn handle_text(&mut self, client: ClientId, text: &str) -> Vec<Outgoing> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle_message(client, &msg),
            Err(e) => Self::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle_message(&mut self, client: ClientId, msg: &ClientMessage) -> Vec<Outgoing> {
        match *msg {
            ClientMessage::Pick { px, py } => {
                let Some((vertex, depth)) = self.pick_vertex(px, py) else {
                    return Self::error(format!("no vertex within {} px of ({px}, {py})", self.config.pick_radius));
                };
                let handle = self.next_handle;
                self.next_handle += 1;
                let target = self.sim.positions[vertex as usize];
                self.handles.insert(handle, ActiveHandle { owner: client, vertex, depth, target });
                vec![Outgoing::msg(ServerMessage::Picked { vertex, handle })]
            }
            ClientMessage::Drag { handle, px, py } => {
                let Some(h) = self.handles.get(&handle).copied() else {
                    return Self::error(format!("unknown handle {handle}"));
                };
                if h.owner != client {
                    return Self::error(format!("handle {handle} belongs to another client"));
                }
                if self.sim.is_pinned(h.vertex) {
                    return Self::error(format!("vertex {} is pinned", h.vertex));
                }
                if !(px.is_finite() && py.is_finite()) {
                    return Self::error("drag position must be finite");
                }
                let target = self.camera.unproject(px, py, h.depth);
                self.handles.insert(handle, ActiveHandle { target, ..h });
                Vec::new()
            }
            ClientMessage::Release { handle } => match self.handles.get(&handle) {
                Some(h) if h.owner == client => {
                    self.handles.remove(&handle);
                    Vec::new()
                }
                _ => vec![Outgoing::msg(ServerMessage::Warning { msg: format!("release of unknown handle {handle} ignored") })],
            },
            ClientMessage::Camera { ref pose, fov } => match camera_from_message(pose, fov, self.camera.width, self.camera.height) {
                Ok(camera) => {
                    self.camera = camera;
                    self.dirty = true;
                    Vec::new()
                }
                Err(e) => Self::error(format!("camera rejected: {e}")),
            },
            ClientMessage::Pause => {
                self.paused = true;
                Vec::new()
            }
            ClientMessage::Resume => {
                self.paused = false;
                Vec::new()
            }
            ClientMessage::Snapshot => {
                let (w, h) = self.config.snapshot;
                match self.render(self.camera.with_resolution(w, h)) {
                    Ok(frame) => vec![Outgoing::Binary(frame.encode())],
                    Err(e) => Self::error(e.to_string()),
                }
            }
        }
    }

    /// Drops every handle owned by `client` (on disconnect).
    pub fn release_client(&mut self, client: ClientId) -> usize {
        let before = self.handles.len();
        self.handles.retain(|_, h| h.owner != client);
        before - self.handles.len()
    }

    /// Active drag constraints, in handle-id order.
    pub fn drag_handles(&self) -> Vec<DragHandle> {
        self.handles
            .values()
            .filter(|h| !self.sim.is_pinned(h.vertex))
            .map(|h| DragHandle { vertex: h.vertex, target: h.target, compliance: self.config.sim.handle_compliance })
            .collect()
    }

    fn render(&mut self, camera: Camera) -> Result<Frame, SessionError> {
        let ctx = DeformedQueryContext::new(&self.field.mesh, self.sim.positions.clone())?;
        let img = render_deformed(&self.field, &ctx, &camera);
        let frame = Frame { id: self.next_frame, width: img.width, height: img.height, rgb: rgb8_bytes(&img.rgb) };
        self.next_frame += 1;
        Ok(frame)
    }

    /// One loop iteration: a simulation step unless paused, then a preview
    /// frame if anything visible changed.
    pub fn tick(&mut self) -> Result<Option<Frame>, SessionError> {
        if !self.paused {
            let handles = self.drag_handles();
            self.sim.step(&handles)?;
            self.dirty = true;
        }
        if !self.dirty {
            return Ok(None);
        }
        self.dirty = false;
        self.render(self.camera).map(Some)
    }
}

/// A line of a scripted session: a client message, or `{"type":"tick"}`
/// (optionally with `"count"`) to advance the loop.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptRecord {
    Message(ClientMessage),
    Tick(usize),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickRecord {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default = "one")]
    count: usize,
}

fn one() -> usize {
    1
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Ok(t) = serde_json::from_str::<TickRecord>(line) {
            if t.kind == "tick" {
                out.push(ScriptRecord::Tick(t.count));
                continue;
            }
        }
        let msg = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(ScriptRecord::Message(msg));
    }
    Ok(out)
}
