//! Pinhole camera in the camera-to-world convention of NeRF-style datasets:
//! the camera looks down its local `-z` axis with `+y` up.

use crate::math::{tan, Mat3, Mat4, Vec3};
use crate::raytrace::Ray;

/// Far clip used for camera rays.
pub const FAR: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub camera_to_world: Mat4,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    /// Square pixels from a horizontal field of view in radians.
    pub fn from_fov_x(camera_to_world: Mat4, fov_x: f64, width: u32, height: u32) -> Self {
        let f = 0.5 * width as f64 / tan(0.5 * fov_x);
        Camera { camera_to_world, width, height, fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64 }
    }

    /// Camera at `eye` looking at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: u32, height: u32) -> Self {
        let back = (eye - target).normalized();
        let mut right = up.cross(back);
        if right.norm() < 1e-9 {
            right = Vec3::new(1.0, 0.0, 0.0).cross(back);
        }
        let right = right.normalized();
        let true_up = back.cross(right);
        let rot = Mat3::from_cols(right, true_up, back);
        Camera::from_fov_x(Mat4::from_rotation_translation(&rot, eye), fov_x, width, height)
    }

    pub fn fov_x(&self) -> f64 {
        2.0 * crate::math::atan2(0.5 * self.width as f64, self.fx)
    }

    /// Same pose and field of view at another resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera { width, height, fx: self.fx * sx, fy: self.fy * sy, cx: self.cx * sx, cy: self.cy * sy, ..*self }
    }

    pub fn position(&self) -> Vec3 {
        self.camera_to_world.translation()
    }

    /// Ray through continuous pixel coordinates (pixel centers at `i + 0.5`).
    pub fn ray(&self, px: f64, py: f64) -> Ray {
        let d = Vec3::new((px - self.cx) / self.fx, -(py - self.cy) / self.fy, -1.0);
        let dir = self.camera_to_world.transform_vector(d);
        Ray::new(self.position(), dir, 0.0, FAR).expect("camera rays are finite")
    }

    pub fn pixel_ray(&self, x: u32, y: u32) -> Ray {
        self.ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Projects a world point to `(px, py, depth)`; `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let r = self.camera_to_world.rotation();
        let local = r.transpose().mul_vec(p - self.position());
        let depth = -local.z;
        if depth <= 1e-12 {
            return None;
        }
        Some((self.cx + self.fx * local.x / depth, self.cy - self.fy * local.y / depth, depth))
    }

    /// World point on the pixel ray through `(px, py)` at camera depth `depth`.
    pub fn unproject(&self, px: f64, py: f64, depth: f64) -> Vec3 {
        let local = Vec3::new((px - self.cx) / self.fx * depth, -(py - self.cy) / self.fy * depth, -depth);
        self.camera_to_world.transform_point(local)
    }

    /// Moves the camera by `offset` in world space.
    pub fn translated(&self, offset: Vec3) -> Self {
        let mut c = *self;
        let t = self.position() + offset;
        for i in 0..3 {
            c.camera_to_world.m[i][3] = t[i];
        }
        c
    }
}
