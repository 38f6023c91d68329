//! Per-polygon UV charts, plane-induced homographies, and viewing-direction
//! fields.
//!
//! A chart is an orthographic parameterization of one planar polygon: the
//! axis-aligned bounding rectangle of the polygon in its `(e1, e2)` frame,
//! gridded into square texels. The longer side of the rectangle maps to the
//! stage resolution. Texel `(x, y)` has its center at plane coordinates
//! `(min_u + (x + 0.5) * texel_size, min_v + (y + 0.5) * texel_size)`.
//!
//! For photo `k` the plane-to-pixel map is the 3x3 homography
//! `H_k = K_k * [R e1 | R e2 | R O + t]`, which agrees with projecting the
//! texel's 3D point directly through the camera.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{Photo, ProxyPolygon};
use nalgebra::{Matrix3, Vector3};

/// Outcome of mapping a texel into a photo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// In front of the camera and inside the image.
    Visible { pixel: (f64, f64), depth: f64 },
    /// Depth <= 0: behind the camera plane.
    Behind,
    /// Positive depth but outside the image bounds.
    OutOfImage { pixel: (f64, f64), depth: f64 },
}

impl Projection {
    pub fn visible(&self) -> Option<((f64, f64), f64)> {
        match self {
            Projection::Visible { pixel, depth } => Some((*pixel, *depth)),
            _ => None,
        }
    }
}

/// Plane-to-pixel homography with its cached inverse.
#[derive(Clone, Debug)]
pub struct Homography {
    /// Maps `(u, v, 1)` plane coordinates to homogeneous pixel coordinates;
    /// the third row evaluates to the camera depth.
    pub forward: Matrix3<f64>,
    pub inverse: Matrix3<f64>,
}

#[derive(Clone, Debug)]
pub struct UvChart {
    pub polygon: ProxyPolygon,
    pub width: usize,
    pub height: usize,
    /// Extent in meters, padded so `extent.0 / width == extent.1 / height`.
    pub extent: (f64, f64),
    pub texel_size: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub inside_mask: Grid<bool>,
    /// One entry per photo; `None` when the camera lies in the polygon plane.
    pub homographies: Vec<Option<Homography>>,
}

impl UvChart {
    /// Build the chart at a given stage resolution.
    pub fn build(polygon: &ProxyPolygon, stage_resolution: usize, photos: &[Photo]) -> Result<Self> {
        assert!(stage_resolution >= 16, "stage resolution below 16");
        let coords: Vec<(f64, f64)> = polygon
            .vertices
            .iter()
            .map(|v| polygon.plane_coords(v))
            .collect();
        let min_u = coords.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_u = coords.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_v = coords.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_v = coords.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let span_u = max_u - min_u;
        let span_v = max_v - min_v;
        let longest = span_u.max(span_v);
        if longest <= 0.0 {
            return Err(Error::DegeneratePolygon(0));
        }
        let texel_size = longest / stage_resolution as f64;
        // Square texels: pad the shorter side up to a whole texel count.
        let width = ((span_u / texel_size - 1e-9).ceil() as usize).max(1);
        let height = ((span_v / texel_size - 1e-9).ceil() as usize).max(1);
        let extent = (width as f64 * texel_size, height as f64 * texel_size);

        let inside_mask = Grid::from_fn(width, height, |x, y| {
            let u = min_u + (x as f64 + 0.5) * texel_size;
            let v = min_v + (y as f64 + 0.5) * texel_size;
            polygon.contains(u, v)
        });

        let homographies = photos
            .iter()
            .map(|photo| plane_homography(polygon, &photo.camera))
            .collect();

        Ok(Self {
            polygon: polygon.clone(),
            width,
            height,
            extent,
            texel_size,
            min_u,
            min_v,
            inside_mask,
            homographies,
        })
    }

    /// Plane coordinates of the center of texel `(x, y)`.
    #[inline]
    pub fn texel_center(&self, x: usize, y: usize) -> (f64, f64) {
        (
            self.min_u + (x as f64 + 0.5) * self.texel_size,
            self.min_v + (y as f64 + 0.5) * self.texel_size,
        )
    }

    /// World point of the center of texel `(x, y)`.
    #[inline]
    pub fn texel_point(&self, x: usize, y: usize) -> Vector3<f64> {
        let (u, v) = self.texel_center(x, y);
        self.polygon.point_at(u, v)
    }

    /// Continuous chart coordinates (texel index space) of plane coordinates.
    #[inline]
    pub fn plane_to_chart(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u - self.min_u) / self.texel_size - 0.5,
            (v - self.min_v) / self.texel_size - 0.5,
        )
    }

    /// Map plane coordinates into photo `photo_index` through the homography.
    pub fn project_plane(&self, photo: &Photo, photo_index: usize, u: f64, v: f64) -> Projection {
        let Some(h) = &self.homographies[photo_index] else {
            return Projection::Behind;
        };
        let q = h.forward * Vector3::new(u, v, 1.0);
        if q.z <= 0.0 {
            return Projection::Behind;
        }
        let pixel = (q.x / q.z, q.y / q.z);
        if photo.camera.in_image(pixel.0, pixel.1) {
            Projection::Visible {
                pixel,
                depth: q.z,
            }
        } else {
            Projection::OutOfImage {
                pixel,
                depth: q.z,
            }
        }
    }

    /// Map the center of texel `(x, y)` into photo `photo_index`.
    pub fn texel_to_pixel(&self, photo: &Photo, photo_index: usize, x: usize, y: usize) -> Projection {
        let (u, v) = self.texel_center(x, y);
        self.project_plane(photo, photo_index, u, v)
    }

    /// Invert the homography: pixel to plane coordinates. `None` when the
    /// pixel's back-projection misses the plane's front side.
    pub fn pixel_to_plane(&self, photo_index: usize, px: f64, py: f64) -> Option<(f64, f64)> {
        let h = self.homographies[photo_index].as_ref()?;
        let q = h.inverse * Vector3::new(px, py, 1.0);
        if q.z.abs() < 1e-15 {
            return None;
        }
        Some((q.x / q.z, q.y / q.z))
    }

    /// World point at the center of the chart rectangle.
    pub fn center_point(&self) -> Vector3<f64> {
        self.polygon
            .point_at(self.min_u + self.extent.0 * 0.5, self.min_v + self.extent.1 * 0.5)
    }
}

/// Homography `K * [R e1 | R e2 | R O + t]` and its inverse. Returns `None`
/// when the camera center lies (numerically) in the polygon plane.
pub fn plane_homography(polygon: &ProxyPolygon, camera: &Camera) -> Option<Homography> {
    let r = &camera.rotation;
    let m = Matrix3::from_columns(&[
        r * polygon.e1,
        r * polygon.e2,
        r * polygon.origin + camera.translation,
    ]);
    let k = Matrix3::new(
        camera.fx, 0.0, camera.cx, //
        0.0, camera.fy, camera.cy, //
        0.0, 0.0, 1.0,
    );
    let forward = k * m;
    // Relative degeneracy test: the camera sits in the plane when the three
    // columns of M become linearly dependent.
    let scale = m.column(0).norm() * m.column(1).norm() * m.column(2).norm();
    if m.determinant().abs() <= 1e-12 * scale.max(1e-300) {
        return None;
    }
    let inverse = forward.try_inverse()?;
    Some(Homography { forward, inverse })
}

/// Unit direction from a surface point toward the camera center.
#[inline]
pub fn view_direction(point: &Vector3<f64>, camera: &Camera) -> Result<Vector3<f64>> {
    let d = camera.center() - point;
    let n = d.norm();
    if n < 1e-12 {
        return Err(Error::DegenerateViewRay(usize::MAX));
    }
    Ok(d / n)
}

/// Per-texel unit vectors, one field per photo plus the constant guidance.
#[derive(Clone, Debug)]
pub struct DirectionField {
    pub vectors: Grid<[f64; 3]>,
}

/// Surface-to-camera direction at every texel center of the chart.
pub fn view_direction_field(chart: &UvChart, photo: &Photo) -> Result<DirectionField> {
    let center = photo.camera.center();
    let mut vectors = Grid::new(chart.width, chart.height, [0.0; 3]);
    for y in 0..chart.height {
        for x in 0..chart.width {
            let p = chart.texel_point(x, y);
            let d = center - p;
            let n = d.norm();
            if n < 1e-12 {
                return Err(Error::DegenerateViewRay(photo.id));
            }
            vectors.set(x, y, [d.x / n, d.y / n, d.z / n]);
        }
    }
    Ok(DirectionField { vectors })
}

/// Guidance viewing direction: the renormalized average of the polygon
/// normal and the mean surface-to-camera direction over the visible photos,
/// all in the surface-to-camera convention. Falls back to the normal when
/// the camera directions cancel.
pub fn guidance_direction(polygon: &ProxyPolygon, visible_photos: &[&Photo]) -> Vector3<f64> {
    assert!(!visible_photos.is_empty(), "guidance needs >= 1 photo");
    // Chart centroid: center of the bounding rectangle in the plane frame.
    let coords: Vec<(f64, f64)> = polygon
        .vertices
        .iter()
        .map(|v| polygon.plane_coords(v))
        .collect();
    let min_u = coords.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let max_u = coords.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let min_v = coords.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max_v = coords.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let anchor = polygon.point_at((min_u + max_u) * 0.5, (min_v + max_v) * 0.5);

    let mut dirs: Vec<Vector3<f64>> = visible_photos
        .iter()
        .map(|p| {
            let d = p.camera.center() - anchor;
            d / d.norm()
        })
        .collect();
    // Canonical summation order makes the result independent of photo order.
    dirs.sort_by(|a, b| {
        (a.x, a.y, a.z)
            .partial_cmp(&(b.x, b.y, b.z))
            .expect("finite directions")
    });
    let sum: Vector3<f64> = dirs.iter().sum();
    if sum.norm() < 1e-12 {
        return polygon.normal;
    }
    let g = sum.normalize() * 0.5 + polygon.normal * 0.5;
    if g.norm() < 1e-12 {
        return polygon.normal;
    }
    g.normalize()
}
