//! Scene domain types: photos, planar proxy polygons, and the run config.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{Color, Grid};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// A calibrated input photograph. Channel values live in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Photo {
    /// Index into the loaded photo list, assigned by sorted filename.
    pub id: usize,
    pub name: String,
    pub camera: Camera,
    pub rgb: Grid<Color>,
}

impl Photo {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate(&self.name)?;
        if self.rgb.width() != self.camera.width || self.rgb.height() != self.camera.height {
            return Err(Error::PhotoSizeMismatch {
                name: self.name.clone(),
                width: self.rgb.width(),
                height: self.rgb.height(),
                cam_width: self.camera.width,
                cam_height: self.camera.height,
            });
        }
        Ok(())
    }
}

/// A planar polygon with an orthonormal plane frame.
///
/// The frame satisfies `e1 x e2 = normal` and both basis vectors are unit
/// length; plane coordinates of a point `p` are `((p - origin) . e1,
/// (p - origin) . e2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyPolygon {
    pub vertices: Vec<Vector3<f64>>,
    pub normal: Vector3<f64>,
    pub origin: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
}

impl ProxyPolygon {
    /// Build the plane frame from an ordered vertex loop. The normal follows
    /// the winding (Newell's method); `e1` is the projection of the world
    /// axis most orthogonal to the normal, ties broken by axis index.
    pub fn from_vertices(index: usize, vertices: Vec<Vector3<f64>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(index));
        }
        let mut normal: Vector3<f64> = Vector3::zeros();
        for i in 0..vertices.len() {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % vertices.len()];
            normal.x += (a.y - b.y) * (a.z + b.z);
            normal.y += (a.z - b.z) * (a.x + b.x);
            normal.z += (a.x - b.x) * (a.y + b.y);
        }
        let area2 = normal.norm();
        if area2 < 1e-12 {
            return Err(Error::DegeneratePolygon(index));
        }
        let normal = normal / area2;

        // Axis most orthogonal to the normal: smallest |n . axis|.
        let mut best_axis = 0;
        let mut best_dot = f64::INFINITY;
        for (axis, dot) in [normal.x.abs(), normal.y.abs(), normal.z.abs()]
            .into_iter()
            .enumerate()
        {
            if dot < best_dot {
                best_dot = dot;
                best_axis = axis;
            }
        }
        let axis = match best_axis {
            0 => Vector3::x(),
            1 => Vector3::y(),
            _ => Vector3::z(),
        };
        let e1 = (axis - normal * axis.dot(&normal)).normalize();
        let e2 = normal.cross(&e1);

        let origin = vertices[0];
        Ok(Self {
            vertices,
            normal,
            origin,
            e1,
            e2,
        })
    }

    /// Plane coordinates of a world point.
    pub fn plane_coords(&self, p: &Vector3<f64>) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.e1), d.dot(&self.e2))
    }

    /// World point of plane coordinates.
    pub fn point_at(&self, u: f64, v: f64) -> Vector3<f64> {
        self.origin + self.e1 * u + self.e2 * v
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let mut c = Vector3::zeros();
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    /// Longest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                d = d.max((self.vertices[i] - self.vertices[j]).norm());
            }
        }
        d
    }

    /// Shoelace area in the plane frame.
    pub fn area(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.vertices.iter().map(|v| self.plane_coords(v)).collect();
        let mut acc = 0.0;
        for i in 0..pts.len() {
            let (x0, y0) = pts[i];
            let (x1, y1) = pts[(i + 1) % pts.len()];
            acc += x0 * y1 - x1 * y0;
        }
        acc.abs() * 0.5
    }

    /// Even-odd point-in-polygon test in plane coordinates.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let pts: Vec<(f64, f64)> = self.vertices.iter().map(|p| self.plane_coords(p)).collect();
        let mut inside = false;
        let mut j = pts.len() - 1;
        for i in 0..pts.len() {
            let (xi, yi) = pts[i];
            let (xj, yj) = pts[j];
            if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Max vertex distance to the plane; used by the planarity check.
    pub fn planarity_deviation(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| (v - self.origin).dot(&self.normal).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let dev = self.planarity_deviation();
        let limit = 1e-4 * self.diameter();
        if dev >= limit {
            return Err(Error::NonPlanarFace {
                face: index,
                deviation: dev,
                limit,
            });
        }
        if self.area() < 1e-12 {
            return Err(Error::DegeneratePolygon(index));
        }
        Ok(())
    }
}

/// The proxy model: a bag of planar polygons over a shared vertex pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyModel {
    pub polygons: Vec<ProxyPolygon>,
}

impl ProxyModel {
    /// Bounding-box diagonal over all vertices; the scale reference for
    /// depth-test epsilons.
    pub fn diameter(&self) -> f64 {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for poly in &self.polygons {
            for v in &poly.vertices {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        if self.polygons.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }
}

fn default_target_resolution() -> usize {
    2048
}
fn default_alpha() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    2.0
}
fn default_omega() -> f64 {
    10.0
}
fn default_lr() -> f64 {
    0.005
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.99
}
fn default_tau() -> f64 {
    1e-3
}
fn default_tau_w() -> f64 {
    0.95
}
fn default_lambda_s() -> f64 {
    0.5
}
fn default_blur_threshold() -> f64 {
    50.0
}
fn default_incline_limit() -> f64 {
    85.0
}

/// Full run configuration. Serialized as the scene JSON; CLI flags override
/// individual fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneConfig {
    pub proxy_path: PathBuf,
    pub camera_file: PathBuf,
    pub photo_dir: PathBuf,
    #[serde(default)]
    pub out_dir: PathBuf,
    #[serde(default = "default_target_resolution")]
    pub target_resolution: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_tau_w")]
    pub tau_w: f64,
    #[serde(default = "default_lambda_s")]
    pub lambda_s: f64,
    #[serde(default = "default_blur_threshold")]
    pub blur_threshold: f64,
    #[serde(default = "default_incline_limit")]
    pub incline_limit_deg: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.target_resolution, 256 | 512 | 1024 | 2048) {
            return Err(Error::InvalidConfig(format!(
                "target_resolution {} not in the doubling chain 256..2048",
                self.target_resolution
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("omega", self.omega),
            ("lr", self.lr),
            ("lambda_s", self.lambda_s),
            ("blur_threshold", self.blur_threshold),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        if !(self.tau_w > 0.0 && self.tau_w <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_w must lie in (0,1], got {}",
                self.tau_w
            )));
        }
        Ok(())
    }

    /// Coarse-to-fine stage resolutions: 256 doubling up to the target.
    pub fn stage_resolutions(&self) -> Vec<usize> {
        let mut stages = Vec::new();
        let mut res = 256usize.min(self.target_resolution);
        loop {
            stages.push(res);
            if res >= self.target_resolution {
                break;
            }
            res *= 2;
        }
        stages
    }
}
