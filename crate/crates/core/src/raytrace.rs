//! Ray/mesh intersection and in-mesh sampling.
//!
//! Boundary triangles sit in a BVH. Their hits split a ray into candidate
//! segments, each classified inside/outside by locating its midpoint, which
//! keeps interval extraction robust to duplicate hits at shared edges.
//! Samples inside an interval are located by walking from the previous
//! sample's tet.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::bvh::Bvh;
use crate::math::{Aabb, Vec3};
use crate::tetmesh::{min_component, Locator, TetLocation, TetMesh, BARY_EPS};

/// Offset past an interval start used to recover the entry tet.
pub const ENTRY_EPS: f64 = 1e-7;

/// Intervals no longer than this are tangential grazes and are dropped.
pub const GRAZE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RayError {
    #[error("ray direction must be non-zero and finite")]
    BadDirection,
    #[error("ray range [{t_near}, {t_far}] is empty")]
    EmptyRange { t_near: f64, t_far: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self, RayError> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) || !origin.is_finite() {
            return Err(RayError::BadDirection);
        }
        if !(t_near < t_far) {
            return Err(RayError::EmptyRange { t_near, t_far });
        }
        Ok(Ray { origin, direction: direction / n, t_near, t_far })
    }

    #[inline(always)]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// One retained sample along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub position: Vec3,
    pub loc: TetLocation,
    pub delta: f64,
}

/// A maximal parameter range where the ray is inside the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayInterval {
    pub t_enter: f64,
    pub t_exit: f64,
    pub entry_tet: u32,
}

/// BVH over the boundary triangles of a mesh (in some vertex placement).
#[derive(Debug, Clone)]
pub struct SurfaceBvh {
    bvh: Bvh,
    triangles: Vec<[Vec3; 3]>,
}

/// Builds the boundary-triangle BVH of `mesh` at its own vertex positions.
pub fn build_bvh(mesh: &TetMesh) -> SurfaceBvh {
    build_bvh_with_positions(mesh, mesh.vertices())
}

/// Builds the boundary-triangle BVH for `mesh`'s connectivity at `positions`.
pub fn build_bvh_with_positions(mesh: &TetMesh, positions: &[Vec3]) -> SurfaceBvh {
    let triangles: Vec<[Vec3; 3]> =
        mesh.boundary_faces().iter().map(|f| f.vertices.map(|i| positions[i as usize])).collect();
    let boxes: Vec<Aabb> = triangles.iter().map(|t| Aabb::from_points(t)).collect();
    SurfaceBvh { bvh: Bvh::build(&boxes), triangles }
}

impl SurfaceBvh {
    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.root_bounds()
    }

    /// Every boundary-triangle hit in `[ray.t_near, ray.t_far]` as
    /// `(t, triangle index)`, sorted by `t`.
    pub fn hits(&self, ray: &Ray) -> Vec<(f64, u32)> {
        let mut hits = Vec::new();
        self.bvh.for_each_on_ray(ray.origin, ray.direction, ray.t_near, ray.t_far, |i| {
            if let Some(t) = intersect_triangle(ray, &self.triangles[i as usize]) {
                if t >= ray.t_near && t <= ray.t_far {
                    hits.push((t, i));
                }
            }
        });
        hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        hits
    }
}

/// Double-sided Möller–Trumbore test with closed edges.
#[inline]
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<f64> {
    const EDGE_EPS: f64 = 1e-12;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv;
    if u < -EDGE_EPS || u > 1.0 + EDGE_EPS {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    Some(e2.dot(q) * inv)
}

/// Maximal disjoint inside-intervals of `ray`, sorted ascending.
pub fn ray_intervals(ray: &Ray, locator: &Locator, surface: &SurfaceBvh) -> Vec<RayInterval> {
    let mut cuts: Vec<f64> = Vec::new();
    cuts.push(ray.t_near);
    cuts.extend(surface.hits(ray).into_iter().map(|(t, _)| t));
    cuts.push(ray.t_far);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= GRAZE_EPS);
    if cuts.len() < 2 {
        return Vec::new();
    }
    let mut out: Vec<RayInterval> = Vec::new();
    let mut hint = None;
    let mut open: Option<(f64, u32)> = None;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside = if b - a > GRAZE_EPS {
            let found = locator.locate(ray.at(0.5 * (a + b)), hint);
            if let Some(l) = found {
                hint = Some(l.tet);
            }
            found
        } else {
            None
        };
        match (inside, open) {
            (Some(mid), None) => open = Some((a, mid.tet)),
            (None, Some((start, tet))) => {
                push_interval(&mut out, ray, locator, start, a, tet);
                open = None;
            }
            _ => {}
        }
    }
    if let Some((start, tet)) = open {
        push_interval(&mut out, ray, locator, start, *cuts.last().unwrap(), tet);
    }
    out
}

fn push_interval(out: &mut Vec<RayInterval>, ray: &Ray, locator: &Locator, start: f64, end: f64, mid_tet: u32) {
    if end - start <= GRAZE_EPS {
        return;
    }
    let probe = (start + ENTRY_EPS).min(0.5 * (start + end));
    let entry_tet = locator.locate(ray.at(probe), Some(mid_tet)).map_or(mid_tet, |l| l.tet);
    out.push(RayInterval { t_enter: start, t_exit: end, entry_tet });
}

/// Lazily generated samples along a ray's intervals. Each sample's `delta`
/// is the distance to the next retained sample in the same interval, or
/// the step size for the last one.
pub struct RaySampler<'a> {
    ray: Ray,
    intervals: &'a [RayInterval],
    locator: &'a Locator,
    step: f64,
    offsets: Vec<f64>,
    interval: usize,
    k: u64,
    hint: Option<u32>,
    pending: Option<(SamplePoint, usize)>,
    dropped: usize,
}

impl<'a> RaySampler<'a> {
    /// `jitter` draws one uniform offset per interval; without it samples
    /// sit at cell centers.
    pub fn new<R: Rng>(
        ray: Ray,
        intervals: &'a [RayInterval],
        locator: &'a Locator,
        step: f64,
        jitter: Option<&mut R>,
    ) -> Self {
        assert!(step > 0.0, "sample step must be positive");
        let offsets = match jitter {
            Some(rng) => intervals.iter().map(|_| rng.gen::<f64>()).collect(),
            None => alloc::vec![0.5; intervals.len()],
        };
        let hint = intervals.first().map(|i| i.entry_tet);
        let mut s = RaySampler { ray, intervals, locator, step, offsets, interval: 0, k: 0, hint, pending: None, dropped: 0 };
        s.pending = s.next_raw();
        s
    }

    /// Samples that fell numerically outside every tet so far.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    fn next_raw(&mut self) -> Option<(SamplePoint, usize)> {
        while self.interval < self.intervals.len() {
            let iv = self.intervals[self.interval];
            let t = iv.t_enter + (self.k as f64 + self.offsets[self.interval]) * self.step;
            if t >= iv.t_exit {
                self.interval += 1;
                self.k = 0;
                self.hint = self.intervals.get(self.interval).map(|i| i.entry_tet);
                continue;
            }
            self.k += 1;
            let position = self.ray.at(t);
            match self.locator.locate(position, self.hint) {
                Some(loc) => {
                    self.hint = Some(loc.tet);
                    let sample = SamplePoint { t, position, loc, delta: self.step };
                    return Some((sample, self.interval));
                }
                None => self.dropped += 1,
            }
        }
        None
    }
}

impl Iterator for RaySampler<'_> {
    type Item = SamplePoint;

    fn next(&mut self) -> Option<SamplePoint> {
        let (mut current, iv) = self.pending.take()?;
        self.pending = self.next_raw();
        if let Some((next, next_iv)) = &self.pending {
            if *next_iv == iv {
                current.delta = next.t - current.t;
            }
        }
        Some(current)
    }
}

/// Collects every sample of `ray` over `intervals`.
pub fn sample_ray<R: Rng>(
    ray: &Ray,
    intervals: &[RayInterval],
    locator: &Locator,
    step: f64,
    jitter: Option<&mut R>,
) -> Vec<SamplePoint> {
    RaySampler::new(*ray, intervals, locator, step, jitter).collect()
}

/// True when `loc` is a valid containment of `p` for `locator`'s geometry.
pub fn location_contains(locator: &Locator, loc: &TetLocation, p: Vec3) -> bool {
    min_component(&locator.bary(loc.tet, p)).1 >= -BARY_EPS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tetmesh::{generate_grid, TetGridConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_tet() -> TetMesh {
        TetMesh::new(
            alloc::vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            alloc::vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn ray_through_single_tet_centroid_hits_twice() {
        let mesh = single_tet();
        let bvh = build_bvh(&mesh);
        assert_eq!(bvh.triangles().len(), 4);
        let c = Vec3::splat(0.25);
        let ray = Ray::new(c - Vec3::new(0.3, 0.2, 1.0) * 2.0, Vec3::new(0.3, 0.2, 1.0), 0.0, 10.0).unwrap();
        assert_eq!(bvh.hits(&ray).len(), 2);
        let missing = Ray::new(Vec3::new(5.0, 5.0, 5.0), Vec3::new(1.0, 0.0, 0.0), 0.0, 10.0).unwrap();
        assert!(bvh.hits(&missing).is_empty());
    }

    #[test]
    fn convex_grid_gives_one_interval() {
        let mesh = generate_grid(&TetGridConfig::new(0.125)).unwrap();
        let loc = mesh.locator();
        let bvh = build_bvh(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let target = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let origin = Vec3::new(rng.gen_range(-2.0..-1.0), rng.gen(), rng.gen());
            let ray = Ray::new(origin, target - origin, 0.0, 10.0).unwrap();
            let iv = ray_intervals(&ray, &loc, &bvh);
            assert_eq!(iv.len(), 1);
        }
    }

    #[test]
    fn graze_along_face_is_discarded_or_empty() {
        let mesh = single_tet();
        let loc = mesh.locator();
        let bvh = build_bvh(&mesh);
        // Touches the tet only at the vertex (1,0,0).
        let ray = Ray::new(Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0), 0.0, 10.0).unwrap();
        assert!(ray_intervals(&ray, &loc, &bvh).is_empty());
    }

    #[test]
    fn short_interval_has_at_most_one_sample_and_no_jitter_is_deterministic() {
        let mesh = generate_grid(&TetGridConfig::new(0.125)).unwrap();
        let loc = mesh.locator();
        let bvh = build_bvh(&mesh);
        let ray = Ray::new(Vec3::new(-1.0, 0.3, 0.6), Vec3::new(1.0, 0.05, -0.02), 0.0, 10.0).unwrap();
        let iv = ray_intervals(&ray, &loc, &bvh);
        let a = sample_ray::<ChaCha8Rng>(&ray, &iv, &loc, 0.01, None);
        let b = sample_ray::<ChaCha8Rng>(&ray, &iv, &loc, 0.01, None);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1].t > w[0].t));
        assert!(a.iter().all(|s| s.delta > 0.0 && location_contains(&loc, &s.loc, s.position)));
        let short = [RayInterval { t_enter: iv[0].t_enter, t_exit: iv[0].t_enter + 0.005, entry_tet: iv[0].entry_tet }];
        assert!(sample_ray::<ChaCha8Rng>(&ray, &short, &loc, 0.01, None).len() <= 1);
    }
}
