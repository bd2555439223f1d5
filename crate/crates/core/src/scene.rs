//! Built-in analytic scenes and their reference renderer.
//!
//! Each scene is a homogeneous emissive medium of constant density with a
//! smoothly varying, view-independent color. Reference images integrate
//! the emission–absorption model with fine midpoint steps, clipped exactly
//! to the shape where a closed form exists.

use alloc::vec::Vec;

use crate::field::camera::Camera;
use crate::field::train::{Dataset, View};
use crate::math::{ceil, cos, exp, expm1, sin, sqrt, Aabb, Vec3};
use crate::raytrace::Ray;

const TAU: f64 = core::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Ring around the `z` axis through `center`.
    Torus { center: Vec3, major: f64, minor: f64 },
    TwoBox { a: Aabb, b: Aabb },
}

impl Shape {
    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            Shape::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Shape::Torus { center, major, minor } => {
                let d = p - center;
                let q = sqrt(d.x * d.x + d.y * d.y) - major;
                q * q + d.z * d.z <= minor * minor
            }
            Shape::TwoBox { a, b } => a.contains(p, 0.0) || b.contains(p, 0.0),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match *self {
            Shape::Sphere { center, radius } => Aabb::new(center - Vec3::splat(radius), center + Vec3::splat(radius)),
            Shape::Torus { center, major, minor } => {
                let r = major + minor;
                Aabb::new(center - Vec3::new(r, r, minor), center + Vec3::new(r, r, minor))
            }
            Shape::TwoBox { a, b } => a.union(b),
        }
    }

    /// Parameter range where `ray` overlaps the shape's support: the exact
    /// chord for spheres, the bounding-box span otherwise.
    fn span(&self, ray: &Ray) -> Option<(f64, f64)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc <= 0.0 {
                    return None;
                }
                let s = sqrt(disc);
                let (t0, t1) = ((-b - s).max(ray.t_near), (-b + s).min(ray.t_far));
                (t0 < t1).then_some((t0, t1))
            }
            _ => {
                let d = ray.direction;
                let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
                self.bounds().ray_overlap(ray.origin, inv, ray.t_near, ray.t_far)
            }
        }
    }
}

/// An emissive medium filling `shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralScene {
    pub shape: Shape,
    pub sigma: f64,
    pub background: [f64; 3],
}

impl ProceduralScene {
    /// The desk-scale sphere: radius 0.27 around the unit cube's center.
    pub fn sphere() -> Self {
        ProceduralScene {
            shape: Shape::Sphere { center: Vec3::splat(0.5), radius: 0.27 },
            sigma: 100.0,
            background: [1.0; 3],
        }
    }

    pub fn torus() -> Self {
        ProceduralScene {
            shape: Shape::Torus { center: Vec3::splat(0.5), major: 0.25, minor: 0.09 },
            sigma: 100.0,
            background: [1.0; 3],
        }
    }

    pub fn two_box() -> Self {
        ProceduralScene {
            shape: Shape::TwoBox {
                a: Aabb::new(Vec3::new(0.22, 0.25, 0.2), Vec3::new(0.48, 0.55, 0.62)),
                b: Aabb::new(Vec3::new(0.55, 0.4, 0.35), Vec3::new(0.8, 0.75, 0.7)),
            },
            sigma: 100.0,
            background: [1.0; 3],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Self::sphere()),
            "torus" => Some(Self::torus()),
            "two-box" | "two_box" => Some(Self::two_box()),
            _ => None,
        }
    }

    pub fn density(&self, p: Vec3) -> f64 {
        if self.shape.contains(p) {
            self.sigma
        } else {
            0.0
        }
    }

    /// Emitted color: low- and mid-frequency sinusoids per channel.
    pub fn color(&self, p: Vec3) -> [f64; 3] {
        scene_color(p)
    }

    /// Reference color of `ray` with midpoint steps of length at most `h`.
    pub fn render_ray(&self, ray: &Ray, h: f64) -> [f64; 3] {
        self.render_ray_alpha(ray, h).0
    }

    /// Reference color and opacity of `ray`.
    pub fn render_ray_alpha(&self, ray: &Ray, h: f64) -> ([f64; 3], f64) {
        let mut rgb = [0.0; 3];
        let mut trans = 1.0;
        if let Some((t0, t1)) = self.shape.span(ray) {
            let n = ceil((t1 - t0) / h).max(1.0) as usize;
            let dt = (t1 - t0) / n as f64;
            let decay = exp(-self.sigma * dt);
            // Color is taken at the centroid of the step's absorption
            // weight rather than its midpoint, which removes the first-order
            // error of a skewed weight.
            let sd = self.sigma * dt;
            let offset = if sd < 1e-4 { 0.5 * dt } else { 1.0 / self.sigma - dt / expm1(sd) };
            let exact_chord = matches!(self.shape, Shape::Sphere { .. });
            for k in 0..n {
                let p = ray.at(t0 + k as f64 * dt + offset);
                if !exact_chord && !self.shape.contains(p) {
                    continue;
                }
                let w = trans * (1.0 - decay);
                let c = self.color(p);
                for i in 0..3 {
                    rgb[i] += w * c[i];
                }
                trans *= decay;
                if trans < 1e-9 {
                    break;
                }
            }
        }
        (core::array::from_fn(|i| rgb[i] + trans * self.background[i]), 1.0 - trans)
    }

    /// Reference view with its opacity map.
    pub fn render_view(&self, camera: &Camera, h: f64) -> View {
        let n = (camera.width * camera.height) as usize;
        let (mut pixels, mut alpha) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..camera.height {
            for x in 0..camera.width {
                let (rgb, a) = self.render_ray_alpha(&camera.pixel_ray(x, y), h);
                pixels.push(rgb.map(|v| v as f32));
                alpha.push(a as f32);
            }
        }
        View { camera: *camera, pixels, alpha: Some(alpha) }
    }

    /// Reference dataset for the given cameras.
    pub fn dataset(&self, cameras: &[Camera], h: f64) -> Dataset {
        Dataset::new(cameras.iter().map(|c| self.render_view(c, h)).collect(), self.background)
    }
}

/// The shared texture of the built-in scenes: three octaves of sinusoids,
/// the finest (wavelength ~0.024, about four pixels at 128x128) oblique to the
/// grid axes so that only deep subdivision levels can resolve it.
pub fn scene_color(p: Vec3) -> [f64; 3] {
    let s = |f: f64, x: f64, phase: f64| sin(TAU * (f * x + phase));
    [
        0.5 + 0.22 * s(3.0, p.x, 0.0) + 0.16 * s(11.0, p.y, 0.3) + 0.12 * s(29.0, p.y + p.z, 0.1),
        0.5 + 0.22 * s(3.0, p.y, 0.25) + 0.16 * s(11.0, p.z, 0.0) + 0.12 * s(29.0, p.z + p.x, 0.6),
        0.5 + 0.22 * s(3.0, p.z, 0.5) + 0.16 * s(11.0, p.x, 0.7) + 0.12 * s(29.0, p.x + p.y, 0.35),
    ]
}

/// Camera rig on a sphere around `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub target: Vec3,
    pub radius: f64,
    pub fov_x: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig { target: Vec3::splat(0.5), radius: 1.1, fov_x: 40f64.to_radians(), width: 128, height: 128 }
    }
}

impl CameraRig {
    /// `count` cameras on a Fibonacci spiral; `offset` rotates the spiral so
    /// that train and test rigs interleave.
    pub fn fibonacci(&self, count: usize, offset: f64) -> Vec<Camera> {
        let golden = core::f64::consts::PI * (3.0 - sqrt(5.0));
        (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = sqrt((1.0 - z * z).max(0.0));
                let phi = golden * i as f64 + offset;
                let dir = Vec3::new(r * cos(phi), r * sin(phi), z);
                Camera::look_at(self.target + dir * self.radius, self.target, Vec3::new(0.0, 0.0, 1.0), self.fov_x, self.width, self.height)
            })
            .collect()
    }

    pub fn train_cameras(&self, count: usize) -> Vec<Camera> {
        self.fibonacci(count, 0.0)
    }

    pub fn test_cameras(&self, count: usize) -> Vec<Camera> {
        self.fibonacci(count, 1.234)
    }
}

/// Distance from `p` to the solid tetrahedron `v`.
pub fn point_tet_distance(p: Vec3, v: &[Vec3; 4]) -> f64 {
    if let Ok(b) = crate::tetmesh::barycentric_of_point(v, p) {
        if b.iter().all(|&w| w >= 0.0) {
            return 0.0;
        }
    }
    const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
    FACES
        .iter()
        .map(|f| (closest_on_triangle(p, v[f[0]], v[f[1]], v[f[2]]) - p).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// True when the solid tet `v` and the closed ball overlap.
pub fn tet_intersects_sphere(v: &[Vec3; 4], center: Vec3, radius: f64) -> bool {
    point_tet_distance(center, v) <= radius
}
