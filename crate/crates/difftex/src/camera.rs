//! Pinhole camera with rigid extrinsics.
//!
//! Conventions, fixed across the whole pipeline:
//! - `rotation` maps world to camera coordinates, `translation` is in the
//!   camera frame: `x_cam = R * x_world + t`.
//! - A point in front of the camera has `z_cam > 0`.
//! - Projection is `p = (fx * x/z + cx, fy * y/z + cy)`.
//! - Pixel `(0, 0)` is the center of the top-left pixel, so valid sample
//!   positions span `[0, width-1] x [0, height-1]`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// Translation in the camera frame.
    pub translation: Vector3<f64>,
}

impl Camera {
    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// Camera +z axis expressed in world coordinates (the viewing direction).
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::z()
    }

    /// Project a world point; returns the real-valued pixel and the depth
    /// `z_cam`. The caller decides what to do with non-positive depths.
    pub fn project(&self, point: &Vector3<f64>) -> ((f64, f64), f64) {
        let pc = self.rotation * point + self.translation;
        let z = pc.z;
        let px = self.fx * pc.x / z + self.cx;
        let py = self.fy * pc.y / z + self.cy;
        ((px, py), z)
    }

    /// True when `(px, py)` supports an in-bounds bilinear fetch.
    pub fn in_image(&self, px: f64, py: f64) -> bool {
        px >= 0.0 && py >= 0.0 && px <= (self.width - 1) as f64 && py <= (self.height - 1) as f64
    }

    /// World-space direction of the ray through pixel `(px, py)`, scaled so
    /// that a point at distance `s` along it has depth `z_cam = s`.
    pub fn ray_direction(&self, px: f64, py: f64) -> Vector3<f64> {
        let dir_cam = Vector3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        self.rotation.transpose() * dir_cam
    }

    /// Check rotation orthonormality (`max |R^T R - I| < 1e-9`) and positive
    /// determinant. `name` feeds the diagnostic.
    pub fn validate(&self, name: &str) -> Result<()> {
        let rtr = self.rotation.transpose() * self.rotation;
        let mut deviation = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((rtr[(i, j)] - expected).abs());
            }
        }
        if deviation >= 1e-9 || self.rotation.determinant() <= 0.0 {
            return Err(Error::NonOrthonormalRotation {
                name: name.to_string(),
                deviation,
            });
        }
        if self.fx <= 0.0 || self.fy <= 0.0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig(format!(
                "camera '{name}': non-positive focal length or zero image size"
            )));
        }
        Ok(())
    }
}

/// Build a world-to-camera rotation for a camera at `center` looking at
/// `target` with the given up hint. Right-handed: +x right, +y down, +z
/// forward.
pub fn look_at_rotation(
    center: &Vector3<f64>,
    target: &Vector3<f64>,
    up_hint: &Vector3<f64>,
) -> Matrix3<f64> {
    let forward = (target - center).normalize();
    let mut right = forward.cross(up_hint);
    if right.norm() < 1e-12 {
        // Up hint parallel to the view axis; pick any perpendicular.
        let alt = if forward.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        right = forward.cross(&alt);
    }
    let right = right.normalize();
    let down = forward.cross(&right).normalize();
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}
