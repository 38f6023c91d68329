//! Visibility: which parts of each polygon each photo sees.
//!
//! A depth buffer of the full proxy is rasterized into every camera
//! (fan-triangulated polygons, nearest depth wins, per-pixel depths from
//! exact ray-plane intersection). Image-space activation masks `a` come from
//! the winning polygon id per pixel; chart-space masks `a_hat` are evaluated
//! at texel centers with a depth test against the buffer. The depth epsilon
//! is relative to the scene diameter so coplanar seams survive the test.

use crate::chart::{Projection, UvChart};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{Photo, ProxyModel};
use rayon::prelude::*;

/// Fraction of the scene diameter used as the depth-agreement epsilon.
pub const DEPTH_EPS_FRACTION: f64 = 1e-4;

/// Per-photo depth buffer with the nearest polygon id per pixel (-1 = none).
#[derive(Clone, Debug)]
pub struct DepthMap {
    pub depth: Grid<f64>,
    pub polygon_id: Grid<i32>,
}

/// Rasterize the proxy into every camera. Parallel over photos.
pub fn render_depth_maps(model: &ProxyModel, photos: &[Photo]) -> Result<Vec<DepthMap>> {
    if model.polygons.is_empty() {
        return Err(Error::InvalidConfig("empty proxy model".into()));
    }
    Ok(photos
        .par_iter()
        .map(|photo| render_depth_map(model, photo))
        .collect())
}

fn render_depth_map(model: &ProxyModel, photo: &Photo) -> DepthMap {
    let cam = &photo.camera;
    let (w, h) = (cam.width, cam.height);
    let mut depth = Grid::new(w, h, f64::INFINITY);
    let mut polygon_id = Grid::new(w, h, -1i32);
    let center = cam.center();

    for (pid, poly) in model.polygons.iter().enumerate() {
        // Only the front side of a polygon carries texture.
        if poly.normal.dot(&(center - poly.origin)) <= 0.0 {
            continue;
        }
        // Plane constant for exact per-pixel depths: a ray X = C + s*dir with
        // dir scaled to unit camera depth hits the plane at s = n.(O - C) / n.dir,
        // and s is then exactly the camera-frame depth of the hit point.
        let plane_offset = poly.normal.dot(&(poly.origin - center));
        let n = poly.vertices.len();
        for t in 1..n - 1 {
            let tri = [poly.vertices[0], poly.vertices[t], poly.vertices[t + 1]];
            let mut proj = [(0.0f64, 0.0f64); 3];
            let mut ok = true;
            for (slot, v) in proj.iter_mut().zip(tri.iter()) {
                let ((px, py), z) = cam.project(v);
                if z <= 1e-12 {
                    ok = false;
                    break;
                }
                *slot = (px, py);
            }
            if !ok {
                continue;
            }
            let min_x = proj.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let max_x = proj.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let min_y = proj.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let max_y = proj.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let x0 = min_x.ceil().max(0.0) as usize;
            let x1 = (max_x.floor() as isize).min(w as isize - 1);
            let y0 = min_y.ceil().max(0.0) as usize;
            let y1 = (max_y.floor() as isize).min(h as isize - 1);
            if x1 < x0 as isize || y1 < y0 as isize {
                continue;
            }
            for py in y0..=y1 as usize {
                for px in x0..=x1 as usize {
                    let p = (px as f64, py as f64);
                    if !point_in_triangle(p, proj[0], proj[1], proj[2]) {
                        continue;
                    }
                    let dir = cam.ray_direction(p.0, p.1);
                    let denom = poly.normal.dot(&dir);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let s = plane_offset / denom;
                    if s > 1e-12 && s < *depth.get(px, py) {
                        depth.set(px, py, s);
                        polygon_id.set(px, py, pid as i32);
                    }
                }
            }
        }
    }
    DepthMap { depth, polygon_id }
}

fn point_in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let edge = |p0: (f64, f64), p1: (f64, f64)| -> f64 {
        (p1.0 - p0.0) * (p.1 - p0.1) - (p1.1 - p0.1) * (p.0 - p0.0)
    };
    let e0 = edge(a, b);
    let e1 = edge(b, c);
    let e2 = edge(c, a);
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}

/// Activation masks of one polygon over its candidate photos.
///
/// Grids are indexed per candidate (compacted: only photos whose geometric
/// chart mask is nonempty participate). `a_hat_geom` is the stage-initial
/// geometric visibility; `a_hat` only ever shrinks below it.
#[derive(Clone, Debug)]
pub struct MaskSet {
    /// Global photo indices of the candidates.
    pub candidates: Vec<usize>,
    /// False once a photo has been eliminated for this polygon.
    pub active: Vec<bool>,
    /// Image-space masks, current.
    pub a: Vec<Grid<bool>>,
    /// Image-space masks as rasterized (footprint of the polygon).
    pub footprint: Vec<Grid<bool>>,
    /// Chart-space masks, current.
    pub a_hat: Vec<Grid<bool>>,
    /// Chart-space geometric visibility at this stage's resolution.
    pub a_hat_geom: Vec<Grid<bool>>,
    /// Overlap masks: texel active in this photo and in at least one other.
    pub overlap: Vec<Grid<bool>>,
}

impl MaskSet {
    pub fn photo_count(&self) -> usize {
        self.candidates.len()
    }

    /// Number of active photos covering texel `(x, y)`.
    pub fn active_count_at(&self, x: usize, y: usize) -> usize {
        (0..self.candidates.len())
            .filter(|&k| self.active[k] && *self.a_hat[k].get(x, y))
            .count()
    }
}

/// Geometric visibility of a texel in one photo: the projected center must
/// be in-image with positive depth, and the polygon must be the nearest
/// surface at the covering pixel. The polygon's depth is re-evaluated along
/// that pixel's own ray (the rasterizer's arithmetic), so the comparison is
/// noise-free for the winning surface and `eps_z` only arbitrates coplanar
/// seams.
pub fn texel_visible(
    chart: &UvChart,
    photo: &Photo,
    photo_index: usize,
    depth_map: &DepthMap,
    eps_z: f64,
    x: usize,
    y: usize,
) -> bool {
    if !chart.inside_mask.get(x, y) {
        return false;
    }
    // The camera must face the textured side.
    if chart
        .polygon
        .normal
        .dot(&(photo.camera.center() - chart.polygon.origin))
        <= 0.0
    {
        return false;
    }
    match chart.texel_to_pixel(photo, photo_index, x, y) {
        Projection::Visible { pixel, .. } => {
            let cam = &photo.camera;
            let px = pixel.0.round().clamp(0.0, (cam.width - 1) as f64);
            let py = pixel.1.round().clamp(0.0, (cam.height - 1) as f64);
            let dir = cam.ray_direction(px, py);
            let denom = chart.polygon.normal.dot(&dir);
            if denom.abs() < 1e-15 {
                return false;
            }
            let s = chart.polygon.normal.dot(&(chart.polygon.origin - cam.center())) / denom;
            s > 0.0 && s <= *depth_map.depth.get(px as usize, py as usize) + eps_z
        }
        _ => false,
    }
}

/// Build the mask set of polygon `polygon_index` at the chart's resolution.
///
/// `restrict_to` limits the candidate set (used when rebuilding after an
/// upscale, where eliminated photos must not re-enter); `None` admits every
/// photo with a nonempty geometric mask.
pub fn build_polygon_masks(
    polygon_index: usize,
    chart: &UvChart,
    photos: &[Photo],
    depth_maps: &[DepthMap],
    eps_z: f64,
    restrict_to: Option<&[usize]>,
) -> MaskSet {
    let mut candidates = Vec::new();
    let mut a_hat_geom = Vec::new();
    for (pi, photo) in photos.iter().enumerate() {
        if let Some(allowed) = restrict_to {
            if !allowed.contains(&pi) {
                continue;
            }
        }
        let mask = Grid::from_fn(chart.width, chart.height, |x, y| {
            texel_visible(chart, photo, pi, &depth_maps[pi], eps_z, x, y)
        });
        if mask.count_ones() > 0 {
            candidates.push(pi);
            a_hat_geom.push(mask);
        }
    }

    let footprint: Vec<Grid<bool>> = candidates
        .iter()
        .map(|&pi| {
            let photo = &photos[pi];
            Grid::from_fn(photo.camera.width, photo.camera.height, |x, y| {
                *depth_maps[pi].polygon_id.get(x, y) == polygon_index as i32
            })
        })
        .collect();

    let a = footprint.clone();
    let a_hat = a_hat_geom.clone();
    let active = vec![true; candidates.len()];
    let mut masks = MaskSet {
        candidates,
        active,
        a,
        footprint,
        a_hat,
        a_hat_geom,
        overlap: Vec::new(),
    };
    recompute_overlap(&mut masks);
    masks
}

/// Recompute the overlap masks `m` from the current `a_hat` set.
pub fn recompute_overlap(masks: &mut MaskSet) {
    let n = masks.candidates.len();
    if n == 0 {
        masks.overlap = Vec::new();
        return;
    }
    let (w, h) = (masks.a_hat[0].width(), masks.a_hat[0].height());
    let mut counts = Grid::new(w, h, 0u32);
    for k in 0..n {
        if !masks.active[k] {
            continue;
        }
        for (i, &b) in masks.a_hat[k].data().iter().enumerate() {
            if b {
                counts.data_mut()[i] += 1;
            }
        }
    }
    masks.overlap = (0..n)
        .map(|k| {
            Grid::from_fn(w, h, |x, y| {
                masks.active[k] && *masks.a_hat[k].get(x, y) && *counts.get(x, y) >= 2
            })
        })
        .collect();
}

/// Per-candidate map from footprint pixel to its nearest chart texel,
/// packed as `x + y * chart_width`; `u32::MAX` where no pullback exists.
/// The mapping is fixed per stage and drives the image-mask rederivation.
pub fn build_pixel_texel_maps(chart: &UvChart, masks: &MaskSet) -> Vec<Grid<u32>> {
    (0..masks.candidates.len())
        .map(|k| {
            let global = masks.candidates[k];
            let footprint = &masks.footprint[k];
            Grid::from_fn(footprint.width(), footprint.height(), |px, py| {
                if !*footprint.get(px, py) {
                    return u32::MAX;
                }
                let Some((u, v)) = chart.pixel_to_plane(global, px as f64, py as f64) else {
                    return u32::MAX;
                };
                let (cx, cy) = chart.plane_to_chart(u, v);
                let tx = cx.round();
                let ty = cy.round();
                if tx < 0.0 || ty < 0.0 || tx >= chart.width as f64 || ty >= chart.height as f64 {
                    return u32::MAX;
                }
                ty as u32 * chart.width as u32 + tx as u32
            })
        })
        .collect()
}

/// Re-derive the image-space mask of candidate `k` from its chart mask by
/// pulling every footprint pixel back onto the chart.
pub fn pullback_image_mask(masks: &mut MaskSet, map: &Grid<u32>, k: usize) {
    if !masks.active[k] {
        masks.a[k].fill(false);
        return;
    }
    let new_a = {
        let a_hat = &masks.a_hat[k];
        let w_chart = a_hat.width() as u32;
        map.map(|&packed| {
            if packed == u32::MAX {
                false
            } else {
                *a_hat.get((packed % w_chart) as usize, (packed / w_chart) as usize)
            }
        })
    };
    masks.a[k] = new_a;
}

/// Threshold the activation masks against the current raw weights.
///
/// A texel stays active in photo `k` when it was active and `theta_k > tau`.
/// When thresholding would deactivate every remaining photo at a texel, the
/// photo with the largest weight (ties: lowest candidate index) is retained,
/// so masks only shrink and no visible texel loses its last photo. Weights
/// are zeroed wherever the mask turns off; image-space masks are re-derived
/// and overlaps recomputed.
pub fn update_activation(
    masks: &mut MaskSet,
    pixel_maps: &[Grid<u32>],
    theta: &mut [Grid<f64>],
    tau: f64,
) {
    let n = masks.candidates.len();
    if n == 0 {
        return;
    }
    let (w, h) = (masks.a_hat[0].width(), masks.a_hat[0].height());
    for y in 0..h {
        for x in 0..w {
            let mut survivors = 0usize;
            let mut any_active = false;
            let mut best_k = usize::MAX;
            let mut best_theta = f64::NEG_INFINITY;
            for k in 0..n {
                if !masks.active[k] || !*masks.a_hat[k].get(x, y) {
                    continue;
                }
                any_active = true;
                let t = *theta[k].get(x, y);
                if t > best_theta {
                    best_theta = t;
                    best_k = k;
                }
                if t > tau {
                    survivors += 1;
                }
            }
            if !any_active {
                continue;
            }
            for k in 0..n {
                if !masks.active[k] || !*masks.a_hat[k].get(x, y) {
                    continue;
                }
                let keep = if survivors > 0 {
                    *theta[k].get(x, y) > tau
                } else {
                    k == best_k
                };
                if !keep {
                    masks.a_hat[k].set(x, y, false);
                    theta[k].set(x, y, 0.0);
                }
            }
        }
    }
    for k in 0..n {
        pullback_image_mask(masks, &pixel_maps[k], k);
    }
    recompute_overlap(masks);
}

/// Depth epsilon for a model: relative to the scene diameter.
pub fn depth_epsilon(model: &ProxyModel) -> f64 {
    DEPTH_EPS_FRACTION * model.diameter().max(1e-9)
}
