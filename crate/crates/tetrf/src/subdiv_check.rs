//! Runtime verification of hierarchical descent against explicitly
//! materialized subdivisions.
//!
//! Random points in random tets are pushed down the hierarchy one level at
//! a time. At each level the child chosen by descent must coincide (as a
//! vertex set) with one of the explicit fine tets containing the point (so shared-face ties pass either
//! way), and its barycentric coordinates must match a direct solve against
//! that fine tet's vertices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetrf_core::field::train::uniform_bary;
use tetrf_core::math::signed_volume;
use tetrf_core::subdivision::{explicit_subdivide, DescentState, SubdivisionError};
use tetrf_core::tetmesh::{point_from_barycentric, TetFrame};
use tetrf_core::{TetMesh, Vec3};

/// Barycentric coordinates may differ from the solve by at most this much.
pub const BARY_TOL: f64 = 1e-9;
/// Containment slack for the explicit point-location scan.
pub const CONTAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub points: usize,
    pub passed: usize,
    /// Largest barycentric deviation seen at any level.
    pub max_bary_error: f64,
    /// Points that lay within `CONTAIN_EPS` of more than one fine tet.
    pub ties: usize,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.passed == self.points
    }
}

/// A random parent tet with volume bounded away from zero, positively
/// oriented.
pub fn random_tet(rng: &mut impl Rng) -> [Vec3; 4] {
    loop {
        let mut v: [Vec3; 4] = core::array::from_fn(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()));
        let vol = signed_volume(v[0], v[1], v[2], v[3]);
        if vol.abs() < 1e-3 {
            continue;
        }
        if vol < 0.0 {
            v.swap(2, 3);
        }
        return v;
    }
}

struct Explicit {
    mesh: TetMesh,
    frames: Vec<TetFrame>,
}

impl Explicit {
    fn new(parent: [Vec3; 4], levels: u32) -> Result<Self, SubdivisionError> {
        let coarse = TetMesh::new(parent.to_vec(), vec![[0, 1, 2, 3]]).expect("random tet is valid");
        let mesh = explicit_subdivide(&coarse, levels)?;
        let frames = mesh.tets().iter().map(|t| TetFrame::new(&t.map(|i| mesh.vertices()[i as usize]))).collect();
        Ok(Explicit { mesh, frames })
    }

    fn containing(&self, p: Vec3) -> Vec<u32> {
        (0..self.frames.len() as u32)
            .filter(|&t| self.frames[t as usize].bary(p).iter().all(|&w| w >= -CONTAIN_EPS))
            .collect()
    }
}

/// Checks `points` random points spread over `tets` random parents at
/// every level from 1 to `levels`.
pub fn run(levels: u32, points: usize, tets: usize, seed: u64) -> Result<CheckReport, SubdivisionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents: Vec<[Vec3; 4]> = (0..tets.max(1)).map(|_| random_tet(&mut rng)).collect();
    let explicit: Vec<Vec<Explicit>> = parents
        .iter()
        .map(|&p| (1..=levels).map(|l| Explicit::new(p, l)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let mut report = CheckReport { points, passed: 0, max_bary_error: 0.0, ties: 0 };
    for i in 0..points {
        let parent = i % parents.len();
        let bary = uniform_bary(&mut rng);
        let p = point_from_barycentric(&parents[parent], &bary);
        let mut state = DescentState::new(bary, parents[parent]);
        let mut ok = true;
        let mut tie = false;
        for ex in &explicit[parent] {
            state = state.descend().1;
            let hits = ex.containing(p);
            tie |= hits.len() > 1;
            // The descended tet must be one of the containing fine tets.
            // Explicit tets may store their vertices in a different order,
            // so match them by position.
            let slots = hits.iter().find_map(|&t| {
                let tet = ex.mesh.tets()[t as usize];
                let map: Option<Vec<usize>> = state
                    .canonical_vertices
                    .iter()
                    .map(|v| tet.iter().position(|&vi| ex.mesh.vertices()[vi as usize] == *v))
                    .collect();
                map.map(|m| (t, m))
            });
            let Some((t, map)) = slots else {
                ok = false;
                break;
            };
            let solved = ex.frames[t as usize].bary(p);
            for (slot, &j) in map.iter().enumerate() {
                let err = (state.bary[slot] - solved[j]).abs();
                report.max_bary_error = report.max_bary_error.max(err);
                ok &= err <= BARY_TOL;
            }
            if !ok {
                break;
            }
        }
        report.ties += tie as usize;
        report.passed += ok as usize;
    }
    Ok(report)
}
