//! Coarse tetrahedral mesh: construction, adjacency, point location, pruning.
//!
//! The initial grid is a body-centered-cubic (BCC) lattice clipped to an
//! axis-aligned box. Each pair of face-adjacent cube cells contributes four
//! tetrahedra around the edge joining their centers; faces on the box
//! boundary are closed with a face-center vertex, giving an exact tiling.

use alloc::vec::Vec;

use thiserror::Error;

use crate::bvh::Bvh;
use crate::math::{round, signed_volume, tet_diameter, Aabb, Mat3, Vec3};

#[inline]
fn cube(x: f64) -> f64 {
    x * x * x
}

/// Marker in `face_adjacency` for faces on the mesh boundary.
pub const NO_NEIGHBOR: u32 = u32::MAX;

/// Barycentric slack accepted by point-in-tet tests.
pub const BARY_EPS: f64 = 1e-9;

/// Relative degeneracy threshold: `|det| <= DEGENERACY_REL * diameter^3`.
pub const DEGENERACY_REL: f64 = 1e-12;

/// Upper bound on generated grid size.
pub const MAX_GRID_TETS: usize = 20_000_000;

/// Local vertex triples of the face opposite each local vertex, ordered so
/// the right-hand normal points out of a positively oriented tet.
pub const FACE_VERTS: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("grid spacing {spacing} must lie in (0, {shortest_edge}) for this domain")]
    InvalidSpacing { spacing: f64, shortest_edge: f64 },
    #[error("grid needs {vertices} vertices and {tets} tetrahedra, over the budget of {budget} tetrahedra")]
    TooLarge { vertices: usize, tets: usize, budget: usize },
    #[error("degenerate tetrahedron: |det| = {det:e} <= {threshold:e}")]
    Degenerate { det: f64, threshold: f64 },
    #[error("tetrahedron {tet} references vertex {vertex}, but the mesh has {count} vertices")]
    BadIndex { tet: usize, vertex: u32, count: usize },
    #[error("tetrahedron {tet} has non-positive signed volume {volume:e}")]
    NonPositiveVolume { tet: usize, volume: f64 },
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFinite { vertex: usize },
    #[error("a face is shared by {count} tetrahedra (first: {tet})")]
    NonManifold { tet: usize, count: usize },
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("keep mask selects no tetrahedra")]
    EmptySelection,
    #[error("keep mask has {got} entries for {expected} tetrahedra")]
    MaskLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetGridConfig {
    pub spacing: f64,
    pub domain: Aabb,
}

impl Default for TetGridConfig {
    fn default() -> Self {
        TetGridConfig { spacing: 0.02, domain: Aabb::unit() }
    }
}

impl TetGridConfig {
    pub fn new(spacing: f64) -> Self {
        TetGridConfig { spacing, ..Default::default() }
    }

    /// Number of BCC cube cells along each axis. The spacing is the
    /// axis-aligned offset between the corner and center sublattices, so a
    /// cell spans two spacings.
    pub fn cells(&self) -> [usize; 3] {
        let ext = self.domain.extent();
        let n = |e: f64| (round(e / (2.0 * self.spacing)) as usize).max(1);
        [n(ext.x), n(ext.y), n(ext.z)]
    }

    fn validate(&self) -> Result<(), MeshError> {
        let ext = self.domain.extent();
        let shortest = ext.x.min(ext.y).min(ext.z);
        if !(self.spacing > 0.0 && self.spacing < shortest) {
            return Err(MeshError::InvalidSpacing { spacing: self.spacing, shortest_edge: shortest });
        }
        Ok(())
    }
}

/// Vertex and tetrahedron counts the grid generator will produce.
pub fn grid_counts(cells: [usize; 3]) -> (usize, usize) {
    let [nx, ny, nz] = cells;
    let interior_faces = (nx - 1) * ny * nz + nx * (ny - 1) * nz + nx * ny * (nz - 1);
    let boundary_faces = 2 * (ny * nz + nx * nz + nx * ny);
    let vertices = (nx + 1) * (ny + 1) * (nz + 1) + nx * ny * nz + boundary_faces;
    (vertices, 4 * (interior_faces + boundary_faces))
}

/// An oriented triangle on the mesh boundary with its owning tet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub vertices: [u32; 3],
    pub tet: u32,
    pub local_face: u8,
}

/// A point addressed by a tet id and barycentric weights in that tet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetLocation {
    pub tet: u32,
    pub bary: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[u32; 4]>,
    face_adjacency: Vec<[u32; 4]>,
    boundary_faces: Vec<BoundaryFace>,
}

impl TetMesh {
    /// Builds a mesh, checking indices and orientation and deriving adjacency.
    pub fn new(vertices: Vec<Vec3>, tets: Vec<[u32; 4]>) -> Result<Self, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(vertex) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite { vertex });
        }
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v as usize >= vertices.len() {
                    return Err(MeshError::BadIndex { tet: t, vertex: v, count: vertices.len() });
                }
            }
            let p = tet.map(|i| vertices[i as usize]);
            let volume = signed_volume(p[0], p[1], p[2], p[3]);
            let threshold = DEGENERACY_REL * cube(tet_diameter(&p));
            if !(6.0 * volume > threshold) {
                return Err(MeshError::NonPositiveVolume { tet: t, volume });
            }
        }
        let (face_adjacency, boundary_faces) = build_adjacency(&tets)?;
        Ok(TetMesh { vertices, tets, face_adjacency, boundary_faces })
    }

    /// Like [`TetMesh::new`], but first swaps two vertices of every
    /// negatively oriented tet.
    pub fn new_reoriented(vertices: Vec<Vec3>, mut tets: Vec<[u32; 4]>) -> Result<Self, MeshError> {
        for tet in tets.iter_mut() {
            if let (Some(a), Some(b), Some(c), Some(d)) = (
                vertices.get(tet[0] as usize),
                vertices.get(tet[1] as usize),
                vertices.get(tet[2] as usize),
                vertices.get(tet[3] as usize),
            ) {
                if signed_volume(*a, *b, *c, *d) < 0.0 {
                    tet.swap(2, 3);
                }
            }
        }
        TetMesh::new(vertices, tets)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[u32; 4]] {
        &self.tets
    }

    pub fn face_adjacency(&self) -> &[[u32; 4]] {
        &self.face_adjacency
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    #[inline]
    pub fn tet_vertices(&self, t: u32) -> [Vec3; 4] {
        self.tets[t as usize].map(|i| self.vertices[i as usize])
    }

    pub fn tet_volume(&self, t: u32) -> f64 {
        let v = self.tet_vertices(t);
        signed_volume(v[0], v[1], v[2], v[3])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len() as u32).map(|t| self.tet_volume(t)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Unique undirected edges, each as `(lo, hi)` vertex ids, sorted.
    pub fn unique_edges(&self) -> Vec<[u32; 2]> {
        let mut edges = Vec::with_capacity(self.tets.len() * 6);
        for tet in &self.tets {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let (a, b) = (tet[i].min(tet[j]), tet[i].max(tet[j]));
                    edges.push([a, b]);
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Builds the point-location acceleration structure for this mesh.
    pub fn locator(&self) -> Locator {
        Locator::new(self, &self.vertices)
    }

    /// Returns the sub-mesh made of the tets selected by `keep`, with
    /// vertices compacted in ascending original order.
    pub fn prune(&self, keep: &[bool]) -> Result<TetMesh, MeshError> {
        self.prune_with_map(keep).map(|(m, _)| m)
    }

    /// As [`TetMesh::prune`], also returning the original id of each
    /// retained vertex.
    pub fn prune_with_map(&self, keep: &[bool]) -> Result<(TetMesh, Vec<u32>), MeshError> {
        if keep.len() != self.tets.len() {
            return Err(MeshError::MaskLength { got: keep.len(), expected: self.tets.len() });
        }
        if !keep.iter().any(|&k| k) {
            return Err(MeshError::EmptySelection);
        }
        let mut remap = alloc::vec![u32::MAX; self.vertices.len()];
        for (tet, _) in self.tets.iter().zip(keep).filter(|(_, &k)| k) {
            for &v in tet {
                remap[v as usize] = 0;
            }
        }
        let mut old_ids = Vec::new();
        let mut vertices = Vec::new();
        for (i, r) in remap.iter_mut().enumerate() {
            if *r == 0 {
                *r = vertices.len() as u32;
                vertices.push(self.vertices[i]);
                old_ids.push(i as u32);
            }
        }
        let tets = self
            .tets
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(tet, _)| tet.map(|v| remap[v as usize]))
            .collect();
        Ok((TetMesh::new(vertices, tets)?, old_ids))
    }
}

fn build_adjacency(tets: &[[u32; 4]]) -> Result<(Vec<[u32; 4]>, Vec<BoundaryFace>), MeshError> {
    let mut faces: Vec<([u32; 3], u32, u8)> = Vec::with_capacity(tets.len() * 4);
    for (t, tet) in tets.iter().enumerate() {
        for (j, fv) in FACE_VERTS.iter().enumerate() {
            let mut key = [tet[fv[0]], tet[fv[1]], tet[fv[2]]];
            key.sort_unstable();
            faces.push((key, t as u32, j as u8));
        }
    }
    faces.sort_unstable();
    let mut adjacency = alloc::vec![[NO_NEIGHBOR; 4]; tets.len()];
    let mut boundary = Vec::new();
    let mut i = 0;
    while i < faces.len() {
        let mut j = i + 1;
        while j < faces.len() && faces[j].0 == faces[i].0 {
            j += 1;
        }
        match j - i {
            1 => {
                let (_, t, f) = faces[i];
                let tet = tets[t as usize];
                let fv = FACE_VERTS[f as usize];
                boundary.push(BoundaryFace {
                    vertices: [tet[fv[0]], tet[fv[1]], tet[fv[2]]],
                    tet: t,
                    local_face: f,
                });
            }
            2 => {
                let (_, a, fa) = faces[i];
                let (_, b, fb) = faces[i + 1];
                adjacency[a as usize][fa as usize] = b;
                adjacency[b as usize][fb as usize] = a;
            }
            count => return Err(MeshError::NonManifold { tet: faces[i].1 as usize, count }),
        }
        i = j;
    }
    boundary.sort_unstable_by_key(|f| (f.tet, f.local_face));
    Ok((adjacency, boundary))
}

/// Barycentric coordinates of `p` with respect to the tet `v`.
pub fn barycentric_of_point(v: &[Vec3; 4], p: Vec3) -> Result<[f64; 4], MeshError> {
    let m = Mat3::from_cols(v[1] - v[0], v[2] - v[0], v[3] - v[0]);
    let det = m.determinant();
    let threshold = DEGENERACY_REL * cube(tet_diameter(v));
    if !(det.abs() > threshold) {
        return Err(MeshError::Degenerate { det, threshold });
    }
    let inv = m.inverse().ok_or(MeshError::Degenerate { det, threshold })?;
    let l = inv.mul_vec(p - v[0]);
    Ok([1.0 - l.x - l.y - l.z, l.x, l.y, l.z])
}

/// Weighted vertex sum `sum_i w_i v_i`.
#[inline]
pub fn point_from_barycentric(v: &[Vec3; 4], w: &[f64; 4]) -> Vec3 {
    v[0] * w[0] + v[1] * w[1] + v[2] * w[2] + v[3] * w[3]
}

#[inline]
pub fn min_component(w: &[f64; 4]) -> (usize, f64) {
    let mut j = 0;
    for i in 1..4 {
        if w[i] < w[j] {
            j = i;
        }
    }
    (j, w[j])
}

/// Precomputed affine map from world space to barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TetFrame {
    origin: Vec3,
    inv: Mat3,
    det: f64,
}

impl TetFrame {
    pub fn new(v: &[Vec3; 4]) -> Self {
        let m = Mat3::from_cols(v[1] - v[0], v[2] - v[0], v[3] - v[0]);
        let det = m.determinant();
        let threshold = DEGENERACY_REL * cube(tet_diameter(v));
        let inv = if det.abs() > threshold { m.inverse() } else { None };
        match inv {
            Some(inv) => TetFrame { origin: v[0], inv, det },
            None => TetFrame { origin: v[0], inv: Mat3::default(), det: 0.0 },
        }
    }

    /// Six times the signed volume; zero for degenerate tets.
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn is_degenerate(&self) -> bool {
        self.det == 0.0
    }

    #[inline]
    pub fn bary(&self, p: Vec3) -> [f64; 4] {
        let l = self.inv.mul_vec(p - self.origin);
        [1.0 - l.x - l.y - l.z, l.x, l.y, l.z]
    }
}

/// Point-location acceleration: per-tet frames, face adjacency for walks,
/// and a tet BVH for the fallback query. Positions may differ from the
/// mesh's own (deformed states share connectivity).
#[derive(Debug, Clone)]
pub struct Locator {
    frames: Vec<TetFrame>,
    adjacency: Vec<[u32; 4]>,
    tet_bvh: Bvh,
    max_walk: usize,
}

impl Locator {
    pub fn new(mesh: &TetMesh, positions: &[Vec3]) -> Self {
        assert_eq!(positions.len(), mesh.num_vertices(), "position count must match the mesh");
        let mut frames = Vec::with_capacity(mesh.num_tets());
        let mut boxes = Vec::with_capacity(mesh.num_tets());
        for tet in mesh.tets() {
            let v = tet.map(|i| positions[i as usize]);
            frames.push(TetFrame::new(&v));
            boxes.push(Aabb::from_points(&v));
        }
        let n = mesh.num_tets() as f64;
        Locator {
            frames,
            adjacency: mesh.face_adjacency().to_vec(),
            tet_bvh: Bvh::build(&boxes),
            max_walk: 64 + 8 * libm::cbrt(n) as usize,
        }
    }

    pub fn frame(&self, t: u32) -> &TetFrame {
        &self.frames[t as usize]
    }

    pub fn frames(&self) -> &[TetFrame] {
        &self.frames
    }

    #[inline]
    pub fn bary(&self, t: u32, p: Vec3) -> [f64; 4] {
        self.frames[t as usize].bary(p)
    }

    /// Locates `p`, walking from `hint` when given and falling back to the
    /// BVH. Returns `None` when `p` is outside every tet.
    pub fn locate(&self, p: Vec3, hint: Option<u32>) -> Option<TetLocation> {
        if let Some(h) = hint {
            if let Some(loc) = self.walk(p, h) {
                return Some(loc);
            }
        }
        self.locate_bvh(p)
    }

    /// Visibility walk across face adjacency. `None` when the walk leaves
    /// the mesh or exceeds its step budget.
    pub fn walk(&self, p: Vec3, start: u32) -> Option<TetLocation> {
        let mut t = start;
        for _ in 0..self.max_walk {
            let frame = &self.frames[t as usize];
            if frame.is_degenerate() {
                return None;
            }
            let bary = frame.bary(p);
            let (j, m) = min_component(&bary);
            if m >= -BARY_EPS {
                return Some(TetLocation { tet: t, bary });
            }
            let next = self.adjacency[t as usize][j];
            if next == NO_NEIGHBOR {
                return None;
            }
            t = next;
        }
        None
    }

    pub fn locate_bvh(&self, p: Vec3) -> Option<TetLocation> {
        self.tet_bvh.find_point(p, 1e-12, |t| {
            let frame = &self.frames[t as usize];
            if frame.is_degenerate() {
                return None;
            }
            let bary = frame.bary(p);
            (min_component(&bary).1 >= -BARY_EPS).then_some(TetLocation { tet: t, bary })
        })
    }
}

/// Generates the BCC-lattice tetrahedral grid filling `config.domain`.
pub fn generate_grid(config: &TetGridConfig) -> Result<TetMesh, MeshError> {
    config.validate()?;
    let cells = config.cells();
    let [nx, ny, nz] = cells;
    let (nv, nt) = grid_counts(cells);
    if nt > MAX_GRID_TETS {
        return Err(MeshError::TooLarge { vertices: nv, tets: nt, budget: MAX_GRID_TETS });
    }
    let lo = config.domain.min;
    let hi = config.domain.max;
    let coord = |axis: usize, i: usize, n: usize| -> f64 {
        if i == n {
            hi[axis]
        } else {
            lo[axis] + (hi[axis] - lo[axis]) * (i as f64 / n as f64)
        }
    };
    let half = |axis: usize, i: usize, n: usize| -> f64 {
        lo[axis] + (hi[axis] - lo[axis]) * ((2 * i + 1) as f64 / (2 * n) as f64)
    };

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vec3::new(coord(0, i, nx), coord(1, j, ny), coord(2, k, nz)));
            }
        }
    }
    let center_base = vertices.len();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                vertices.push(Vec3::new(half(0, i, nx), half(1, j, ny), half(2, k, nz)));
            }
        }
    }
    let corner = |c: [usize; 3]| (c[0] + (nx + 1) * (c[1] + (ny + 1) * c[2])) as u32;
    let center = |c: [usize; 3]| (center_base + c[0] + nx * (c[1] + ny * c[2])) as u32;

    let mut tets: Vec<[u32; 4]> = Vec::with_capacity(nt);
    let mut emit = |tets: &mut Vec<[u32; 4]>, verts: &[Vec3], mut t: [u32; 4]| {
        let p = t.map(|i| verts[i as usize]);
        if signed_volume(p[0], p[1], p[2], p[3]) < 0.0 {
            t.swap(2, 3);
        }
        tets.push(t);
    };

    let n = [nx, ny, nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let cell = [i, j, k];
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    // The four corners of the cell face on the +axis side, in cyclic order.
                    let mut square = [[0usize; 3]; 4];
                    for (q, (du, dv)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                        let mut c = cell;
                        c[axis] += 1;
                        c[u] += du;
                        c[v] += dv;
                        square[q] = c;
                    }
                    let apex_a = center(cell);
                    let apex_b = if cell[axis] + 1 < n[axis] {
                        let mut nb = cell;
                        nb[axis] += 1;
                        Some(center(nb))
                    } else {
                        None
                    };
                    close_face(&mut tets, &mut vertices, &mut emit, apex_a, apex_b, &square.map(corner));
                    if cell[axis] == 0 {
                        let mut low = [[0usize; 3]; 4];
                        for (q, (du, dv)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                            let mut c = cell;
                            c[u] += du;
                            c[v] += dv;
                            low[q] = c;
                        }
                        close_face(&mut tets, &mut vertices, &mut emit, apex_a, None, &low.map(corner));
                    }
                }
            }
        }
    }
    debug_assert_eq!(vertices.len(), nv);
    debug_assert_eq!(tets.len(), nt);
    TetMesh::new(vertices, tets)
}

/// Fills the region around one square cell face: four tets joining the two
/// cell centers to each square edge, or, on the domain boundary, four tets
/// joining the single center to a new face-center vertex.
fn close_face(
    tets: &mut Vec<[u32; 4]>,
    vertices: &mut Vec<Vec3>,
    emit: &mut impl FnMut(&mut Vec<[u32; 4]>, &[Vec3], [u32; 4]),
    apex_a: u32,
    apex_b: Option<u32>,
    square: &[u32; 4],
) {
    let apex_b = apex_b.unwrap_or_else(|| {
        let c = square.iter().fold(Vec3::ZERO, |acc, &v| acc + vertices[v as usize]) * 0.25;
        vertices.push(c);
        (vertices.len() - 1) as u32
    });
    for q in 0..4 {
        emit(tets, vertices, [apex_a, apex_b, square[q], square[(q + 1) % 4]]);
    }
}
