//! Implicit 1-to-8 tetrahedral subdivision.
//!
//! Every tet is split by its edge midpoints into four corner children and
//! four children carving the central octahedron along the `m02–m13`
//! diagonal. A point's child is chosen from its barycentric coordinates
//! alone, and its coordinates in the child follow from one constant 4x4
//! matrix per child. Nothing is stored per level: a descent carries only the
//! current four vertex positions and weights.

use alloc::vec::Vec;

use thiserror::Error;

use crate::math::Vec3;
use crate::tetmesh::{MeshError, TetMesh, MAX_GRID_TETS};

/// Deepest explicit materialization allowed.
pub const MAX_EXPLICIT_LEVELS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubdivisionError {
    #[error("explicit subdivision to {levels} levels exceeds the limit of {max}")]
    TooDeep { levels: u32, max: u32 },
    #[error("explicit subdivision would create {tets} tetrahedra, over the budget of {budget}")]
    TooLarge { tets: usize, budget: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// How a child vertex is obtained from its parent's vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRecipe {
    Corner(u8),
    Midpoint(u8, u8),
}

impl VertexRecipe {
    #[inline(always)]
    pub fn apply(self, parent: &[Vec3; 4]) -> Vec3 {
        match self {
            VertexRecipe::Corner(i) => parent[i as usize],
            VertexRecipe::Midpoint(i, j) => Vec3::midpoint(parent[i as usize], parent[j as usize]),
        }
    }
}

use VertexRecipe::{Corner as C, Midpoint as M};

/// Vertex recipes of the eight children. Children 0–3 sit at the parent's
/// corners; 4–7 share the `m02–m13` diagonal.
pub const CHILD_RECIPES: [[VertexRecipe; 4]; 8] = [
    [C(0), M(0, 1), M(0, 2), M(0, 3)],
    [C(1), M(0, 1), M(1, 2), M(1, 3)],
    [C(2), M(0, 2), M(1, 2), M(2, 3)],
    [C(3), M(0, 3), M(1, 3), M(2, 3)],
    [M(0, 1), M(0, 2), M(0, 3), M(1, 3)],
    [M(0, 2), M(0, 3), M(1, 3), M(2, 3)],
    [M(0, 2), M(1, 2), M(1, 3), M(2, 3)],
    [M(0, 1), M(0, 2), M(1, 2), M(1, 3)],
];

/// Index of one of the eight children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChildIndex(u8);

impl ChildIndex {
    pub fn new(value: u8) -> Option<Self> {
        (value < 8).then_some(ChildIndex(value))
    }

    #[inline(always)]
    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ChildIndex> {
        (0..8).map(ChildIndex)
    }
}

/// Exact rational with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

const fn gcd(mut a: i64, mut b: i64) -> i64 {
    if a < 0 {
        a = -a;
    }
    if b < 0 {
        b = -b;
    }
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub const fn new(num: i64, den: i64) -> Ratio {
        let (mut num, mut den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(num, den);
        if g > 1 {
            num /= g;
            den /= g;
        }
        if num == 0 {
            den = 1;
        }
        Ratio { num, den }
    }

    pub const fn sub(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }

    pub const fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }

    pub const fn div(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den, self.den * o.num)
    }

    pub const fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Parent barycentric coordinates of each vertex of child `k`, as columns.
const fn recipe_matrix(k: usize) -> [[Ratio; 4]; 4] {
    let mut m = [[Ratio::ZERO; 4]; 4];
    let mut c = 0;
    while c < 4 {
        match CHILD_RECIPES[k][c] {
            VertexRecipe::Corner(i) => m[i as usize][c] = Ratio::ONE,
            VertexRecipe::Midpoint(i, j) => {
                m[i as usize][c] = Ratio::new(1, 2);
                m[j as usize][c] = Ratio::new(1, 2);
            }
        }
        c += 1;
    }
    m
}

/// Exact Gauss–Jordan inverse of a 4x4 rational matrix.
const fn invert(mut a: [[Ratio; 4]; 4]) -> [[Ratio; 4]; 4] {
    let mut inv = [[Ratio::ZERO; 4]; 4];
    let mut i = 0;
    while i < 4 {
        inv[i][i] = Ratio::ONE;
        i += 1;
    }
    let mut col = 0;
    while col < 4 {
        let mut piv = col;
        while a[piv][col].num == 0 {
            piv += 1;
            assert!(piv < 4, "recipe matrix is singular");
        }
        let tmp = a[piv];
        a[piv] = a[col];
        a[col] = tmp;
        let tmp = inv[piv];
        inv[piv] = inv[col];
        inv[col] = tmp;
        let p = a[col][col];
        let mut j = 0;
        while j < 4 {
            a[col][j] = a[col][j].div(p);
            inv[col][j] = inv[col][j].div(p);
            j += 1;
        }
        let mut r = 0;
        while r < 4 {
            if r != col && a[r][col].num != 0 {
                let f = a[r][col];
                let mut j = 0;
                while j < 4 {
                    a[r][j] = a[r][j].sub(f.mul(a[col][j]));
                    inv[r][j] = inv[r][j].sub(f.mul(inv[col][j]));
                    j += 1;
                }
            }
            r += 1;
        }
        col += 1;
    }
    inv
}

/// Exact transfer matrix of child `k`: maps parent barycentric coordinates
/// to coordinates in the child, in the child's recipe vertex order.
pub const fn transfer_matrix_exact(k: usize) -> [[Ratio; 4]; 4] {
    invert(recipe_matrix(k))
}

const fn build_transfer_const() -> [[[f64; 4]; 4]; 8] {
    let mut out = [[[0.0; 4]; 4]; 8];
    let mut k = 0;
    while k < 8 {
        let exact = transfer_matrix_exact(k);
        let mut r = 0;
        while r < 4 {
            let mut c = 0;
            while c < 4 {
                out[k][r][c] = exact[r][c].to_f64();
                c += 1;
            }
            r += 1;
        }
        k += 1;
    }
    out
}

/// Transfer matrices evaluated at compile time.
pub const TRANSFER: [[[f64; 4]; 4]; 8] = build_transfer_const();

/// Child recipes together with their transfer matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdivisionTable {
    pub child_vertex_recipes: [[VertexRecipe; 4]; 8],
    pub transfer_matrices: [[[f64; 4]; 4]; 8],
}

/// Derives the transfer matrices from the child recipes (exact rational
/// inversion) at run time.
pub fn build_transfer_matrices() -> SubdivisionTable {
    SubdivisionTable { child_vertex_recipes: CHILD_RECIPES, transfer_matrices: build_transfer_const() }
}

impl SubdivisionTable {
    /// Checks the compiled-in constants against a fresh derivation.
    pub fn self_check() -> bool {
        build_transfer_matrices().transfer_matrices == TRANSFER
    }
}

#[inline(always)]
fn apply_transfer(k: usize, a: &[f64; 4]) -> [f64; 4] {
    let m = &TRANSFER[k];
    core::array::from_fn(|r| m[r][0] * a[0] + m[r][1] * a[1] + m[r][2] * a[2] + m[r][3] * a[3])
}

/// Chooses the child containing the point with barycentric weights `bary`.
/// Exact 0.5 ties go to the `<=` branches.
#[inline]
pub fn select_child(bary: &[f64; 4]) -> ChildIndex {
    for (i, &a) in bary.iter().enumerate() {
        if a > 0.5 {
            return ChildIndex(i as u8);
        }
    }
    let s1 = bary[1] + bary[2];
    let s2 = bary[2] + bary[3];
    ChildIndex(match (s1 > 0.5, s2 > 0.5) {
        (false, false) => 4,
        (false, true) => 5,
        (true, true) => 6,
        (true, false) => 7,
    })
}

/// Vertices of child `k` of the tet `parent`.
#[inline]
pub fn child_vertices(parent: &[Vec3; 4], k: ChildIndex) -> [Vec3; 4] {
    CHILD_RECIPES[k.get()].map(|r| r.apply(parent))
}

/// Maps child `k`'s barycentric weights back to the parent's.
#[inline]
pub fn child_to_parent_bary(k: ChildIndex, child: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (recipe, &w) in CHILD_RECIPES[k.get()].iter().zip(child) {
        match *recipe {
            VertexRecipe::Corner(i) => out[i as usize] += w,
            VertexRecipe::Midpoint(i, j) => {
                out[i as usize] += 0.5 * w;
                out[j as usize] += 0.5 * w;
            }
        }
    }
    out
}

/// All eight children of `parent`, in child-index order.
pub fn canonical_children(parent: &[Vec3; 4]) -> [[Vec3; 4]; 8] {
    core::array::from_fn(|k| child_vertices(parent, ChildIndex(k as u8)))
}

/// Maps parent weights into child `k`'s weights, clamping the round-off
/// negatives that matrix application can produce.
#[inline]
pub fn transfer(k: ChildIndex, bary: &[f64; 4]) -> [f64; 4] {
    let mut b = apply_transfer(k.get(), bary);
    if b.iter().any(|&w| w < 0.0) {
        for w in b.iter_mut() {
            *w = w.max(0.0);
        }
        let s: f64 = b.iter().sum();
        for w in b.iter_mut() {
            *w /= s;
        }
    }
    b
}

/// One step of hierarchical barycentric inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentState {
    pub level: u32,
    pub bary: [f64; 4],
    pub canonical_vertices: [Vec3; 4],
    pub deformed_vertices: Option<[Vec3; 4]>,
}

impl DescentState {
    pub fn new(bary: [f64; 4], canonical_vertices: [Vec3; 4]) -> Self {
        DescentState { level: 0, bary, canonical_vertices, deformed_vertices: None }
    }

    pub fn with_deformed(mut self, deformed: [Vec3; 4]) -> Self {
        self.deformed_vertices = Some(deformed);
        self
    }

    /// Point represented by the state in canonical space.
    pub fn canonical_point(&self) -> Vec3 {
        crate::tetmesh::point_from_barycentric(&self.canonical_vertices, &self.bary)
    }

    /// Descends one level; returns the chosen child alongside the new state.
    #[inline]
    pub fn descend(&self) -> (ChildIndex, DescentState) {
        let k = select_child(&self.bary);
        let next = DescentState {
            level: self.level + 1,
            bary: transfer(k, &self.bary),
            canonical_vertices: child_vertices(&self.canonical_vertices, k),
            deformed_vertices: self.deformed_vertices.map(|d| child_vertices(&d, k)),
        };
        (k, next)
    }
}

/// Free-function form of [`DescentState::descend`].
#[inline]
pub fn descend(state: &DescentState) -> DescentState {
    state.descend().1
}

/// Materializes `levels` rounds of subdivision with shared midpoints merged.
/// Child `k` of tet `t` becomes tet `8 t + k`. Subdivision always follows
/// the recipe vertex order, exactly as implicit descent does; only the
/// output tets whose recipe order is negatively oriented get their last two
/// vertices swapped.
pub fn explicit_subdivide(mesh: &TetMesh, levels: u32) -> Result<TetMesh, SubdivisionError> {
    if levels > MAX_EXPLICIT_LEVELS {
        return Err(SubdivisionError::TooDeep { levels, max: MAX_EXPLICIT_LEVELS });
    }
    let tets = mesh.num_tets().saturating_mul(1usize << (3 * levels));
    if tets > MAX_GRID_TETS {
        return Err(SubdivisionError::TooLarge { tets, budget: MAX_GRID_TETS });
    }
    let mut vertices = mesh.vertices().to_vec();
    let mut tets = mesh.tets().to_vec();
    for _ in 0..levels {
        tets = subdivide_once(&mut vertices, &tets);
    }
    Ok(TetMesh::new_reoriented(vertices, tets)?)
}

/// One round on recipe-ordered tets; appends the new midpoints to `vertices`.
fn subdivide_once(vertices: &mut Vec<Vec3>, tets: &[[u32; 4]]) -> Vec<[u32; 4]> {
    let mut edges = Vec::with_capacity(tets.len() * 6);
    for tet in tets {
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push([tet[i].min(tet[j]), tet[i].max(tet[j])]);
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let nv = vertices.len();
    for e in &edges {
        let m = Vec3::midpoint(vertices[e[0] as usize], vertices[e[1] as usize]);
        vertices.push(m);
    }
    let mid_id = |a: u32, b: u32| -> u32 {
        let key = [a.min(b), a.max(b)];
        (nv + edges.binary_search(&key).expect("edge of a mesh tet")) as u32
    };
    let mut out = Vec::with_capacity(tets.len() * 8);
    for tet in tets {
        for recipes in CHILD_RECIPES.iter() {
            out.push(recipes.map(|r| match r {
                VertexRecipe::Corner(i) => tet[i as usize],
                VertexRecipe::Midpoint(i, j) => mid_id(tet[i as usize], tet[j as usize]),
            }));
        }
    }
    out
}
