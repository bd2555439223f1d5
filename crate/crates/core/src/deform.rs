//! XPBD mass–spring simulation on the coarse mesh and rendering of its
//! deformed states.
//!
//! Springs follow the unique mesh edges and every tet carries a volume
//! constraint. Each substep predicts positions, resets the multipliers,
//! runs one Gauss–Seidel sweep over all constraints and the drag handles,
//! and derives velocities from the position change.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::field::camera::Camera;
use crate::field::render::{QueryGeometry, RenderedImage};
use crate::field::RadianceField;
use crate::math::{signed_volume, Vec3};
use crate::tetmesh::TetMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite position after step {step}, substep {substep}; {diagnostic}")]
    NonFinite { step: u64, substep: u32, diagnostic: String },
    #[error("handle vertex {vertex} out of range ({count} vertices)")]
    BadHandle { vertex: u32, count: usize },
    #[error("position count {got} does not match the mesh's {expected}")]
    PositionCount { expected: usize, got: usize },
    #[error("frame {frame} has {got} vertices, expected {expected}")]
    FrameVertexCount { frame: usize, expected: usize, got: usize },
    #[error("frame {frame}, vertex {vertex} is not finite")]
    FrameNonFinite { frame: usize, vertex: usize },
    #[error("invalid simulation settings: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Frame time step.
    pub dt: f64,
    pub substeps: u32,
    pub gravity: Vec3,
    pub edge_compliance: f64,
    pub volume_compliance: f64,
    pub handle_compliance: f64,
    /// Fraction of velocity removed per substep (0 = none).
    pub damping: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 60.0,
            substeps: 10,
            gravity: Vec3::ZERO,
            edge_compliance: 1e-6,
            volume_compliance: 0.0,
            handle_compliance: 1e-8,
            damping: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.substeps == 0 {
            return Err(SimError::Config("dt and substeps must be positive"));
        }
        if !(self.edge_compliance >= 0.0 && self.volume_compliance >= 0.0 && self.handle_compliance >= 0.0) {
            return Err(SimError::Config("compliances must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.damping) || !self.gravity.is_finite() {
            return Err(SimError::Config("damping must be in [0, 1) and gravity finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeConstraint {
    pub i: u32,
    pub j: u32,
    pub rest: f64,
    pub compliance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeConstraint {
    pub tet: u32,
    pub vertices: [u32; 4],
    /// Signed rest volume.
    pub rest: f64,
    pub compliance: f64,
}

/// Pulls one vertex towards a target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragHandle {
    pub vertex: u32,
    pub target: Vec3,
    pub compliance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub prev_positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Zero pins a vertex.
    pub inv_mass: Vec<f64>,
    pub edges: Vec<EdgeConstraint>,
    pub volumes: Vec<VolumeConstraint>,
    pub edge_lambdas: Vec<f64>,
    pub volume_lambdas: Vec<f64>,
    pub config: SimConfig,
    pub steps: u64,
}

impl SimState {
    /// Rest state of `mesh` with unit masses.
    pub fn from_mesh(mesh: &TetMesh, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let positions = mesh.vertices().to_vec();
        let edges: Vec<EdgeConstraint> = mesh
            .unique_edges()
            .into_iter()
            .map(|[i, j]| EdgeConstraint {
                i,
                j,
                rest: (positions[i as usize] - positions[j as usize]).norm(),
                compliance: config.edge_compliance,
            })
            .collect();
        let volumes: Vec<VolumeConstraint> = mesh
            .tets()
            .iter()
            .enumerate()
            .map(|(t, &vertices)| VolumeConstraint {
                tet: t as u32,
                vertices,
                rest: mesh.tet_volume(t as u32),
                compliance: config.volume_compliance,
            })
            .collect();
        let n = positions.len();
        Ok(SimState {
            prev_positions: positions.clone(),
            positions,
            velocities: alloc::vec![Vec3::ZERO; n],
            inv_mass: alloc::vec![1.0; n],
            edge_lambdas: alloc::vec![0.0; edges.len()],
            volume_lambdas: alloc::vec![0.0; volumes.len()],
            edges,
            volumes,
            config,
            steps: 0,
        })
    }

    pub fn pin(&mut self, vertex: u32) {
        self.inv_mass[vertex as usize] = 0.0;
    }

    pub fn is_pinned(&self, vertex: u32) -> bool {
        self.inv_mass[vertex as usize] == 0.0
    }

    /// Sum of signed tet volumes in the current configuration.
    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().map(|c| self.tet_volume(&c.vertices)).sum()
    }

    /// Total linear momentum (unit density per inverse mass).
    pub fn momentum(&self) -> Vec3 {
        self.velocities
            .iter()
            .zip(&self.inv_mass)
            .filter(|(_, &w)| w > 0.0)
            .fold(Vec3::ZERO, |acc, (v, &w)| acc + *v / w)
    }

    fn tet_volume(&self, v: &[u32; 4]) -> f64 {
        let p = v.map(|i| self.positions[i as usize]);
        signed_volume(p[0], p[1], p[2], p[3])
    }

    /// Advances one frame.
    pub fn step(&mut self, handles: &[DragHandle]) -> Result<(), SimError> {
        for h in handles {
            if h.vertex as usize >= self.positions.len() {
                return Err(SimError::BadHandle { vertex: h.vertex, count: self.positions.len() });
            }
        }
        let h = self.config.dt / self.config.substeps as f64;
        for sub in 0..self.config.substeps {
            self.predict(h);
            self.edge_lambdas.iter_mut().for_each(|l| *l = 0.0);
            self.volume_lambdas.iter_mut().for_each(|l| *l = 0.0);
            self.solve_edges(h);
            self.solve_volumes(h);
            self.solve_handles(handles, h);
            self.update_velocities(h);
            if let Some(v) = self.positions.iter().position(|p| !p.is_finite()) {
                return Err(SimError::NonFinite { step: self.steps, substep: sub, diagnostic: self.diagnose(v) });
            }
        }
        self.steps += 1;
        Ok(())
    }

    fn predict(&mut self, h: f64) {
        let g = self.config.gravity;
        for i in 0..self.positions.len() {
            self.prev_positions[i] = self.positions[i];
            if self.inv_mass[i] > 0.0 {
                self.velocities[i] = self.velocities[i] + g * h;
                self.positions[i] = self.positions[i] + self.velocities[i] * h;
            }
        }
    }

    fn solve_edges(&mut self, h: f64) {
        let inv_h2 = 1.0 / (h * h);
        for (c, lambda) in self.edges.iter().zip(self.edge_lambdas.iter_mut()) {
            let (i, j) = (c.i as usize, c.j as usize);
            let (wi, wj) = (self.inv_mass[i], self.inv_mass[j]);
            let alpha = c.compliance * inv_h2;
            let denom = wi + wj + alpha;
            if denom == 0.0 {
                continue;
            }
            let d = self.positions[i] - self.positions[j];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let n = d / len;
            let dl = (-(len - c.rest) - alpha * *lambda) / denom;
            *lambda += dl;
            self.positions[i] = self.positions[i] + n * (wi * dl);
            self.positions[j] = self.positions[j] - n * (wj * dl);
        }
    }

    fn solve_volumes(&mut self, h: f64) {
        let inv_h2 = 1.0 / (h * h);
        for (c, lambda) in self.volumes.iter().zip(self.volume_lambdas.iter_mut()) {
            let idx = c.vertices.map(|v| v as usize);
            let p = idx.map(|v| self.positions[v]);
            let w = idx.map(|v| self.inv_mass[v]);
            let (e1, e2, e3) = (p[1] - p[0], p[2] - p[0], p[3] - p[0]);
            let g1 = e2.cross(e3);
            let g2 = e3.cross(e1);
            let g3 = e1.cross(e2);
            let g0 = -(g1 + g2 + g3);
            let grads = [g0, g1, g2, g3];
            let alpha = c.compliance * inv_h2;
            let denom: f64 = (0..4).map(|k| w[k] * grads[k].norm_squared()).sum::<f64>() + alpha;
            if denom == 0.0 {
                continue;
            }
            let constraint = e1.dot(g1) - 6.0 * c.rest;
            let dl = (-constraint - alpha * *lambda) / denom;
            *lambda += dl;
            for k in 0..4 {
                self.positions[idx[k]] = self.positions[idx[k]] + grads[k] * (w[k] * dl);
            }
        }
    }

    fn solve_handles(&mut self, handles: &[DragHandle], h: f64) {
        let inv_h2 = 1.0 / (h * h);
        for handle in handles {
            let v = handle.vertex as usize;
            let w = self.inv_mass[v];
            if w == 0.0 {
                continue;
            }
            let alpha = handle.compliance * inv_h2;
            let d = self.positions[v] - handle.target;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let dl = -len / (w + alpha);
            self.positions[v] = self.positions[v] + d / len * (w * dl);
        }
    }

    fn update_velocities(&mut self, h: f64) {
        let keep = 1.0 - self.config.damping;
        for i in 0..self.positions.len() {
            if self.inv_mass[i] > 0.0 {
                self.velocities[i] = (self.positions[i] - self.prev_positions[i]) / h * keep;
            }
        }
    }

    fn diagnose(&self, vertex: usize) -> String {
        let worst_edge = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, c)| c.i as usize == vertex || c.j as usize == vertex)
            .map(|(k, c)| (k, (self.positions[c.i as usize] - self.positions[c.j as usize]).norm() - c.rest))
            .fold(None::<(usize, f64)>, |best, (k, e)| match best {
                Some((_, b)) if !(e.abs() > b.abs()) => best,
                _ => Some((k, e)),
            });
        let inverted = self.volumes.iter().filter(|c| !(self.tet_volume(&c.vertices) > 0.0)).count();
        format!("first bad vertex {vertex}; worst incident edge {worst_edge:?}; {inverted} non-positive tets")
    }
}

/// Query structures for one deformed placement of a canonical mesh.
#[derive(Debug, Clone)]
pub struct DeformedQueryContext {
    pub positions: Vec<Vec3>,
    pub geometry: QueryGeometry,
}

impl DeformedQueryContext {
    pub fn new(mesh: &TetMesh, positions: Vec<Vec3>) -> Result<Self, SimError> {
        if positions.len() != mesh.num_vertices() {
            return Err(SimError::PositionCount { expected: mesh.num_vertices(), got: positions.len() });
        }
        if let Some(v) = positions.iter().position(|p| !p.is_finite()) {
            return Err(SimError::FrameNonFinite { frame: 0, vertex: v });
        }
        let geometry = QueryGeometry::new(mesh, &positions);
        Ok(DeformedQueryContext { positions, geometry })
    }

    /// Tets whose deformed orientation is inverted or degenerate; samples
    /// landing in them are dropped.
    pub fn inverted_tets(&self) -> usize {
        self.geometry.inverted_tets()
    }
}

/// Renders `field` as deformed by `ctx`. Features are looked up through
/// canonical virtual-vertex positions, so the identity deformation gives
/// exactly the canonical image.
pub fn render_deformed(field: &RadianceField, ctx: &DeformedQueryContext, camera: &Camera) -> RenderedImage {
    field.render_image(&ctx.geometry, camera)
}

/// Checks decoded animation frames against the mesh's vertex count.
pub fn validate_frames(frames: &[Vec<Vec3>], vertices: usize) -> Result<(), SimError> {
    for (f, frame) in frames.iter().enumerate() {
        if frame.len() != vertices {
            return Err(SimError::FrameVertexCount { frame: f, expected: vertices, got: frame.len() });
        }
        if let Some(v) = frame.iter().position(|p| !p.is_finite()) {
            return Err(SimError::FrameNonFinite { frame: f, vertex: v });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tetmesh::{generate_grid, TetGridConfig};

    #[test]
    fn rest_state_is_stationary() {
        let mesh = generate_grid(&TetGridConfig::new(0.25)).unwrap();
        let mut sim = SimState::from_mesh(&mesh, SimConfig::default()).unwrap();
        for _ in 0..20 {
            sim.step(&[]).unwrap();
        }
        for (p, q) in sim.positions.iter().zip(mesh.vertices()) {
            assert!((*p - *q).norm() < 1e-9);
        }
    }

    #[test]
    fn pinned_vertices_do_not_move() {
        let mesh = generate_grid(&TetGridConfig::new(0.25)).unwrap();
        let config = SimConfig { gravity: Vec3::new(0.0, 0.0, -9.81), ..Default::default() };
        let mut sim = SimState::from_mesh(&mesh, config).unwrap();
        let pinned: Vec<u32> = (0..mesh.num_vertices() as u32).filter(|&v| mesh.vertices()[v as usize].z > 0.99).collect();
        for &v in &pinned {
            sim.pin(v);
        }
        let handle = DragHandle { vertex: pinned[0], target: Vec3::splat(3.0), compliance: 0.0 };
        for _ in 0..30 {
            sim.step(&[handle]).unwrap();
        }
        for &v in &pinned {
            assert_eq!(sim.positions[v as usize].to_array(), mesh.vertices()[v as usize].to_array());
        }
    }

    #[test]
    fn bad_handle_is_rejected() {
        let mesh = generate_grid(&TetGridConfig::new(0.5)).unwrap();
        let mut sim = SimState::from_mesh(&mesh, SimConfig::default()).unwrap();
        let h = DragHandle { vertex: 999, target: Vec3::ZERO, compliance: 0.0 };
        assert!(matches!(sim.step(&[h]), Err(SimError::BadHandle { .. })));
    }

    #[test]
    fn frame_validation() {
        let ok = alloc::vec![alloc::vec![Vec3::ZERO; 3]; 2];
        assert!(validate_frames(&ok, 3).is_ok());
        let mut bad = ok.clone();
        bad[1].pop();
        assert_eq!(validate_frames(&bad, 3), Err(SimError::FrameVertexCount { frame: 1, expected: 3, got: 2 }));
    }
}
