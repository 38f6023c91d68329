//! Quality terms, the restricted differentiable render, and the three loss
//! terms with their analytic gradients with respect to the raw weights.
//!
//! Gradient conventions: the quality matrices, color statistics, guidance
//! residuals, smoothness costs (C, D, G) and all masks are data for the
//! current iteration — they are recomputed each iteration but treated as
//! constants when differentiating. The differentiable path runs through
//! texture composition (weight normalization), bilinear texture sampling in
//! the render, the L1 regularizer, and the absolute differences of the
//! parameter loss.

use crate::chart::UvChart;
use crate::grid::{bilinear_tap, luminance, sample_color, Color, Grid};
use crate::scene::Photo;
use crate::texture_field::{build_sample_cache, SampleCache, TextureMap, WEIGHT_SUM_EPS};
use crate::visibility::MaskSet;
use nalgebra::Vector3;
use rayon::prelude::*;

/// Variance floor of the color-consensus Gaussian.
pub const COLOR_CONSENSUS_EPS: f64 = 1e-4;

/// Per-photo quality over the chart plus the shared color statistics.
#[derive(Clone, Debug)]
pub struct QualityMatrix {
    /// `Q_a * Q_c`, zero outside the activation mask.
    pub q: Grid<f64>,
    pub mu: Grid<Color>,
    pub sigma: Grid<f64>,
}

/// Quality grids for every candidate photo of one polygon.
#[derive(Clone, Debug)]
pub struct QualityContext {
    pub q: Vec<Grid<f64>>,
    pub mu: Grid<Color>,
    pub sigma: Grid<f64>,
}

/// Mean and channel-pooled standard deviation of the active photos' sampled
/// colors at every texel.
pub fn color_stats(masks: &MaskSet, cache: &SampleCache) -> (Grid<Color>, Grid<f64>) {
    let n = masks.candidates.len();
    let (w, h) = if n == 0 {
        (0, 0)
    } else {
        (masks.a_hat[0].width(), masks.a_hat[0].height())
    };
    let mut mu = Grid::new(w, h, [0.0; 3]);
    let mut sigma = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut count = 0usize;
            let mut mean = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            for k in 0..n {
                if !(masks.active[k] && *masks.a_hat[k].get(x, y)) {
                    continue;
                }
                if let Some(c) = cache.get(k, x, y) {
                    for ch in 0..3 {
                        mean[ch] += c[ch];
                        sq[ch] += c[ch] * c[ch];
                    }
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            let mut var_pooled = 0.0;
            for ch in 0..3 {
                mean[ch] *= inv;
                var_pooled += (sq[ch] * inv - mean[ch] * mean[ch]).max(0.0);
            }
            mu.set(x, y, mean);
            sigma.set(x, y, (var_pooled / 3.0).sqrt());
        }
    }
    (mu, sigma)
}

fn quality_grid(
    masks: &MaskSet,
    cache: &SampleCache,
    q_angle: &Grid<f64>,
    k: usize,
    mu: &Grid<Color>,
    sigma: &Grid<f64>,
) -> Grid<f64> {
    let (w, h) = (q_angle.width(), q_angle.height());
    Grid::from_fn(w, h, |x, y| {
        if !(masks.active[k] && *masks.a_hat[k].get(x, y)) {
            return 0.0;
        }
        let Some(color) = cache.get(k, x, y) else {
            return 0.0;
        };
        let m = mu.get(x, y);
        let s = *sigma.get(x, y);
        let dist_sq = (color[0] - m[0]).powi(2)
            + (color[1] - m[1]).powi(2)
            + (color[2] - m[2]).powi(2);
        let q_color = (-dist_sq / (2.0 * s * s + COLOR_CONSENSUS_EPS)).exp();
        q_angle.get(x, y) * q_color
    })
}

/// Quality matrix of a single candidate photo.
pub fn quality_matrix(
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    k: usize,
) -> QualityMatrix {
    let cache = build_sample_cache(chart, photos, masks);
    let angles = view_angle_grids(chart, photos, masks);
    let (mu, sigma) = color_stats(masks, &cache);
    let q = quality_grid(masks, &cache, &angles[k], k, &mu, &sigma);
    QualityMatrix { q, mu, sigma }
}

/// Clamped frontality cosine `max(0, d_k(t) . n)` per candidate photo;
/// geometry-only, cacheable per stage.
pub fn view_angle_grids(chart: &UvChart, photos: &[Photo], masks: &MaskSet) -> Vec<Grid<f64>> {
    let normal = chart.polygon.normal;
    (0..masks.candidates.len())
        .map(|k| {
            let center = photos[masks.candidates[k]].camera.center();
            Grid::from_fn(chart.width, chart.height, |x, y| {
                let p = chart.texel_point(x, y);
                let d = (center - p).normalize();
                d.dot(&normal).max(0.0)
            })
        })
        .collect()
}

/// Quality grids for all candidates, sharing one statistics pass.
pub fn quality_context(
    masks: &MaskSet,
    cache: &SampleCache,
    angles: &[Grid<f64>],
) -> QualityContext {
    let (mu, sigma) = color_stats(masks, cache);
    let q = (0..masks.candidates.len())
        .map(|k| quality_grid(masks, cache, &angles[k], k, &mu, &sigma))
        .collect();
    QualityContext { q, mu, sigma }
}

/// Geometry-only data of one coarse-to-fine stage: squared guidance
/// residuals `|d_k(t) - v_guide|^2` and frontality cosines per candidate.
#[derive(Clone, Debug)]
pub struct StageContext {
    pub guidance: Vector3<f64>,
    pub persp_sq: Vec<Grid<f64>>,
    pub q_angle: Vec<Grid<f64>>,
}

pub fn stage_context(
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    guidance: Vector3<f64>,
) -> StageContext {
    let mut persp_sq = Vec::with_capacity(masks.candidates.len());
    let mut q_angle = Vec::with_capacity(masks.candidates.len());
    let normal = chart.polygon.normal;
    for k in 0..masks.candidates.len() {
        let center = photos[masks.candidates[k]].camera.center();
        let mut persp = Grid::new(chart.width, chart.height, 0.0);
        let mut angle = Grid::new(chart.width, chart.height, 0.0);
        for y in 0..chart.height {
            for x in 0..chart.width {
                let p = chart.texel_point(x, y);
                let d = (center - p).normalize();
                persp.set(x, y, (d - guidance).norm_squared());
                angle.set(x, y, d.dot(&normal).max(0.0));
            }
        }
        persp_sq.push(persp);
        q_angle.push(angle);
    }
    StageContext {
        guidance,
        persp_sq,
        q_angle,
    }
}

/// Per-iteration stop-gradient data: quality grids and the smoothness
/// disparity `D` toward the up and left neighbors.
#[derive(Clone, Debug)]
pub struct LossContext {
    pub quality: QualityContext,
    pub d_up: Grid<f64>,
    pub d_left: Grid<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Build the iteration context from the current texture. `G` is the mean
/// grayscale central-difference gradient magnitude over the photos mapped at
/// each texel.
pub fn loss_context(
    masks: &MaskSet,
    cache: &SampleCache,
    stage: &StageContext,
    texture: &TextureMap,
) -> LossContext {
    let quality = quality_context(masks, cache, &stage.q_angle);
    let (w, h) = (texture.rgb.width(), texture.rgb.height());

    // Pooled gradient magnitude G, accumulated photo by photo so only one
    // grayscale scratch grid is alive at a time.
    let mut g_sum = Grid::new(w, h, 0.0f64);
    let mut g_count = Grid::new(w, h, 0u32);
    for k in 0..masks.candidates.len() {
        if !masks.active[k] {
            continue;
        }
        let gray = Grid::from_fn(w, h, |x, y| {
            cache.get(k, x, y).map(luminance).unwrap_or(0.0)
        });
        for y in 0..h {
            for x in 0..w {
                if !*masks.a_hat[k].get(x, y) {
                    continue;
                }
                let gx = (gray.get((x + 1).min(w - 1), y) - gray.get(x.saturating_sub(1), y)) / 2.0;
                let gy = (gray.get(x, (y + 1).min(h - 1)) - gray.get(x, y.saturating_sub(1))) / 2.0;
                *g_sum.get_mut(x, y) += (gx * gx + gy * gy).sqrt();
                *g_count.get_mut(x, y) += 1;
            }
        }
    }
    let g = Grid::from_fn(w, h, |x, y| {
        let c = *g_count.get(x, y);
        if c == 0 {
            0.0
        } else {
            g_sum.get(x, y) / c as f64
        }
    });

    let disparity = |x: usize, y: usize, qx: usize, qy: usize| -> f64 {
        let a = texture.rgb.get(x, y);
        let b = texture.rgb.get(qx, qy);
        let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        sigmoid(dist) * (1.0 + g.get(x, y))
    };
    let d_up = Grid::from_fn(w, h, |x, y| {
        if y == 0 {
            0.0
        } else {
            disparity(x, y, x, y - 1)
        }
    });
    let d_left = Grid::from_fn(w, h, |x, y| {
        if x == 0 {
            0.0
        } else {
            disparity(x, y, x - 1, y)
        }
    });

    LossContext {
        quality,
        d_up,
        d_left,
    }
}

/// Render the polygon's texture back into photo `k`, restricted to the
/// photo's image-space activation mask. Pixels outside the mask are `None`.
pub fn render_polygon_view(
    texture: &TextureMap,
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    k: usize,
) -> Grid<Option<Color>> {
    let global = masks.candidates[k];
    let photo = &photos[global];
    let mask = &masks.a[k];
    Grid::from_fn(photo.camera.width, photo.camera.height, |px, py| {
        if !masks.active[k] || !*mask.get(px, py) {
            return None;
        }
        let (u, v) = chart.pixel_to_plane(global, px as f64, py as f64)?;
        let (cx, cy) = chart.plane_to_chart(u, v);
        Some(sample_color(&texture.rgb, cx, cy))
    })
}

fn zero_grads(masks: &MaskSet) -> Vec<Grid<f64>> {
    let (w, h) = if masks.candidates.is_empty() {
        (0, 0)
    } else {
        (masks.a_hat[0].width(), masks.a_hat[0].height())
    };
    vec![Grid::new(w, h, 0.0); masks.candidates.len()]
}

fn mask_bbox(mask: &Grid<bool>) -> Option<(usize, usize, usize, usize)> {
    let mut x0 = usize::MAX;
    let mut y0 = usize::MAX;
    let mut x1 = 0usize;
    let mut y1 = 0usize;
    for (x, y, &b) in mask.enumerate() {
        if b {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    if x0 == usize::MAX {
        None
    } else {
        Some((x0, y0, x1, y1))
    }
}

/// Render loss: masked, quality-weighted squared error of every rendered
/// view against its photo, plus the L1 sparsity term on the raw weights.
///
/// `texture` and `sums` must come from `compose_with_sums` on the same
/// `theta`; the gradient backpropagates through the bilinear texture fetch
/// and the per-texel weight normalization. The per-photo passes run in
/// parallel and merge in candidate order, so results are independent of
/// the thread count.
#[allow(clippy::too_many_arguments)]
pub fn loss_render(
    theta: &[Grid<f64>],
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    quality: &QualityContext,
    cache: &SampleCache,
    texture: &TextureMap,
    sums: &Grid<f64>,
) -> (f64, Vec<Grid<f64>>) {
    let mut value = 0.0;
    let mut grad = zero_grads(masks);
    if masks.candidates.is_empty() {
        return (value, grad);
    }
    let (w, h) = (texture.rgb.width(), texture.rgb.height());

    // Forward + backward over every masked pixel, one photo per task.
    let partials: Vec<Option<(f64, Grid<Color>)>> = (0..masks.candidates.len())
        .into_par_iter()
        .map(|j| {
            if !masks.active[j] {
                return None;
            }
            let global = masks.candidates[j];
            let photo = &photos[global];
            let mask = &masks.a[j];
            let (bx0, by0, bx1, by1) = mask_bbox(mask)?;
            let mut part_value = 0.0;
            let mut d_texture = Grid::new(w, h, [0.0f64; 3]);
            for py in by0..=by1 {
                for px in bx0..=bx1 {
                    if !*mask.get(px, py) {
                        continue;
                    }
                    let Some((u, v)) = chart.pixel_to_plane(global, px as f64, py as f64) else {
                        continue;
                    };
                    let (cx, cy) = chart.plane_to_chart(u, v);
                    let tap = bilinear_tap(w, h, cx, cy);
                    let q = tap.w00 * quality.q[j].get(tap.x0, tap.y0)
                        + tap.w10 * quality.q[j].get(tap.x1, tap.y0)
                        + tap.w01 * quality.q[j].get(tap.x0, tap.y1)
                        + tap.w11 * quality.q[j].get(tap.x1, tap.y1);
                    let pixel = photo.rgb.get(px, py);
                    let c00 = texture.rgb.get(tap.x0, tap.y0);
                    let c10 = texture.rgb.get(tap.x1, tap.y0);
                    let c01 = texture.rgb.get(tap.x0, tap.y1);
                    let c11 = texture.rgb.get(tap.x1, tap.y1);
                    let mut dr_cache = [0.0f64; 3];
                    for ch in 0..3 {
                        let rendered = tap.w00 * c00[ch]
                            + tap.w10 * c10[ch]
                            + tap.w01 * c01[ch]
                            + tap.w11 * c11[ch];
                        let residual = q * (rendered - pixel[ch]);
                        part_value += residual * residual;
                        dr_cache[ch] = 2.0 * q * residual;
                    }
                    let d00 = d_texture.get_mut(tap.x0, tap.y0);
                    for ch in 0..3 {
                        d00[ch] += dr_cache[ch] * tap.w00;
                    }
                    let d10 = d_texture.get_mut(tap.x1, tap.y0);
                    for ch in 0..3 {
                        d10[ch] += dr_cache[ch] * tap.w10;
                    }
                    let d01 = d_texture.get_mut(tap.x0, tap.y1);
                    for ch in 0..3 {
                        d01[ch] += dr_cache[ch] * tap.w01;
                    }
                    let d11 = d_texture.get_mut(tap.x1, tap.y1);
                    for ch in 0..3 {
                        d11[ch] += dr_cache[ch] * tap.w11;
                    }
                }
            }
            Some((part_value, d_texture))
        })
        .collect();

    // Deterministic merge in candidate order.
    let mut d_texture = Grid::new(w, h, [0.0f64; 3]);
    for partial in partials.into_iter().flatten() {
        value += partial.0;
        for (dst, src) in d_texture.data_mut().iter_mut().zip(partial.1.data()) {
            for ch in 0..3 {
                dst[ch] += src[ch];
            }
        }
    }

    // Chain through the weight normalization: dU/dtheta_k = (s_k - U) / S.
    for y in 0..h {
        for x in 0..w {
            let s = *sums.get(x, y);
            if s < WEIGHT_SUM_EPS || *texture.hole.get(x, y) {
                continue;
            }
            let du = d_texture.get(x, y);
            if du == &[0.0; 3] {
                continue;
            }
            let u = texture.rgb.get(x, y);
            for k in 0..masks.candidates.len() {
                if !(masks.active[k] && *masks.a_hat[k].get(x, y)) {
                    continue;
                }
                if let Some(c) = cache.get(k, x, y) {
                    let mut acc = 0.0;
                    for ch in 0..3 {
                        acc += du[ch] * (c[ch] - u[ch]);
                    }
                    *grad[k].get_mut(x, y) += acc / s;
                }
            }
        }
    }

    // L1 sparsity over the activation masks; subgradient 0 at exactly zero.
    for k in 0..masks.candidates.len() {
        if !masks.active[k] {
            continue;
        }
        for y in 0..h {
            for x in 0..w {
                if !*masks.a_hat[k].get(x, y) {
                    continue;
                }
                let t = *theta[k].get(x, y);
                value += t.abs();
                *grad[k].get_mut(x, y) += if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
    }

    (value, grad)
}

/// Perspective loss: raw weight times the squared deviation of the texel's
/// viewing direction from the guidance direction. Linear in the weights.
pub fn loss_perspective(
    theta: &[Grid<f64>],
    masks: &MaskSet,
    stage: &StageContext,
) -> (f64, Vec<Grid<f64>>) {
    let mut value = 0.0;
    let mut grad = zero_grads(masks);
    for k in 0..masks.candidates.len() {
        if !masks.active[k] {
            continue;
        }
        for (x, y, &active) in masks.a_hat[k].enumerate() {
            if !active {
                continue;
            }
            let r2 = *stage.persp_sq[k].get(x, y);
            value += theta[k].get(x, y) * r2;
            *grad[k].get_mut(x, y) += r2;
        }
    }
    (value, grad)
}

/// Parameter loss: cost-weighted absolute differences of the masked weights
/// toward the up and left neighbors, with `C = m_k * D + lambda_s` held
/// constant for the gradient.
pub fn loss_parameter(
    theta: &[Grid<f64>],
    masks: &MaskSet,
    ctx: &LossContext,
    lambda_s: f64,
) -> (f64, Vec<Grid<f64>>) {
    let mut value = 0.0;
    let mut grad = zero_grads(masks);
    if masks.candidates.is_empty() {
        return (value, grad);
    }
    let (w, h) = (masks.a_hat[0].width(), masks.a_hat[0].height());
    for k in 0..masks.candidates.len() {
        if !masks.active[k] {
            continue;
        }
        let a_hat = &masks.a_hat[k];
        let overlap = &masks.overlap[k];
        let masked = |x: usize, y: usize| -> f64 {
            if *a_hat.get(x, y) {
                *theta[k].get(x, y)
            } else {
                0.0
            }
        };
        for y in 0..h {
            for x in 0..w {
                let vt = masked(x, y);
                let m = if *overlap.get(x, y) { 1.0 } else { 0.0 };
                let mut pair = |qx: usize, qy: usize, d: f64| {
                    let vq = masked(qx, qy);
                    let c = m * d + lambda_s;
                    let diff = vt - vq;
                    value += c * diff.abs();
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    if *a_hat.get(x, y) {
                        *grad[k].get_mut(x, y) += c * sign;
                    }
                    if *a_hat.get(qx, qy) {
                        *grad[k].get_mut(qx, qy) -= c * sign;
                    }
                };
                if y > 0 {
                    pair(x, y - 1, *ctx.d_up.get(x, y));
                }
                if x > 0 {
                    pair(x - 1, y, *ctx.d_left.get(x, y));
                }
            }
        }
    }
    (value, grad)
}

/// Balancing coefficients of the combined objective.
#[derive(Clone, Copy, Debug)]
pub struct LossParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub lambda_s: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            omega: 10.0,
            lambda_s: 0.5,
        }
    }
}

/// One evaluation of the combined objective.
#[derive(Clone, Debug)]
pub struct LossBreakdown {
    pub render: f64,
    pub perspective: f64,
    pub parameter: f64,
    pub total: f64,
    pub grad: Vec<Grid<f64>>,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self
                .grad
                .iter()
                .all(|g| g.data().iter().all(|v| v.is_finite()))
    }
}

/// Combined loss and gradient. `texture`/`sums` must be composed from the
/// same `theta` (see `compose_with_sums`); the contexts carry the frozen
/// per-stage and per-iteration data. The gradient is zero wherever the
/// activation mask is off.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_and_grad(
    theta: &[Grid<f64>],
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    stage: &StageContext,
    ctx: &LossContext,
    cache: &SampleCache,
    texture: &TextureMap,
    sums: &Grid<f64>,
    params: &LossParams,
) -> LossBreakdown {
    let (l_render, g_render) = loss_render(
        theta,
        chart,
        photos,
        masks,
        &ctx.quality,
        cache,
        texture,
        sums,
    );
    let (l_persp, g_persp) = loss_perspective(theta, masks, stage);
    let (l_para, g_para) = loss_parameter(theta, masks, ctx, params.lambda_s);

    let mut grad = zero_grads(masks);
    for k in 0..masks.candidates.len() {
        for i in 0..grad[k].len() {
            grad[k].data_mut()[i] = params.alpha * g_render[k].data()[i]
                + params.beta * g_persp[k].data()[i]
                + params.omega * g_para[k].data()[i];
        }
        // Enforce zero outside the activation mask.
        if masks.active[k] {
            for (i, &b) in masks.a_hat[k].data().iter().enumerate() {
                if !b {
                    grad[k].data_mut()[i] = 0.0;
                }
            }
        } else {
            grad[k].fill(0.0);
        }
    }

    let total = params.alpha * l_render + params.beta * l_persp + params.omega * l_para;
    LossBreakdown {
        render: l_render,
        perspective: l_persp,
        parameter: l_para,
        total,
        grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at_rotation, Camera};
    use crate::scene::{ProxyModel, ProxyPolygon};
    use crate::texture_field::compose_with_sums;
    use crate::visibility::{build_polygon_masks, depth_epsilon, render_depth_maps};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn wall() -> ProxyPolygon {
        ProxyPolygon::from_vertices(
            0,
            vec![
                Vector3::new(-0.5, -0.5, 0.0),
                Vector3::new(0.5, -0.5, 0.0),
                Vector3::new(0.5, 0.5, 0.0),
                Vector3::new(-0.5, 0.5, 0.0),
            ],
        )
        .unwrap()
    }

    fn oblique_photo(id: usize, center: Vector3<f64>, rgb: Grid<Color>) -> Photo {
        let rotation = look_at_rotation(&center, &Vector3::zeros(), &Vector3::y());
        Photo {
            id,
            name: format!("photo_{id:03}.png"),
            camera: Camera {
                width: rgb.width(),
                height: rgb.height(),
                fx: rgb.width() as f64 * 1.2,
                fy: rgb.width() as f64 * 1.2,
                cx: (rgb.width() - 1) as f64 / 2.0,
                cy: (rgb.height() - 1) as f64 / 2.0,
                rotation,
                translation: -rotation * center,
            },
            rgb,
        }
    }

    /// Fronto-parallel camera whose pixels align exactly with texel centers
    /// of the unit wall's chart at resolution `res` (margin `m` pixels).
    fn aligned_photo(id: usize, res: usize, m: usize, dist: f64, rgb: Grid<Color>) -> Photo {
        assert_eq!(rgb.width(), res + 2 * m);
        assert_eq!(rgb.height(), res + 2 * m);
        let ts = 1.0 / res as f64;
        let rotation = Matrix3::from_rows(&[
            Vector3::x().transpose(),
            (-Vector3::y()).transpose(),
            (-Vector3::z()).transpose(),
        ]);
        let center = Vector3::new(0.0, 0.0, dist);
        Photo {
            id,
            name: format!("photo_{id:03}.png"),
            camera: Camera {
                width: res + 2 * m,
                height: res + 2 * m,
                fx: dist / ts,
                fy: dist / ts,
                cx: res as f64 / 2.0 + m as f64 - 0.5,
                cy: res as f64 / 2.0 + m as f64 - 0.5,
                rotation,
                translation: -rotation * center,
            },
            rgb,
        }
    }

    use nalgebra::Matrix3;

    fn structured_rgb(w: usize, h: usize, seed: u64) -> Grid<Color> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(w, h, |_, _| {
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ]
        })
    }

    struct TestScene {
        photos: Vec<Photo>,
        chart: UvChart,
        masks: MaskSet,
    }

    fn build_scene(photos: Vec<Photo>, res: usize) -> TestScene {
        let model = ProxyModel {
            polygons: vec![wall()],
        };
        let depth_maps = render_depth_maps(&model, &photos).unwrap();
        let chart = UvChart::build(&model.polygons[0], res, &photos).unwrap();
        let masks =
            build_polygon_masks(0, &chart, &photos, &depth_maps, depth_epsilon(&model), None);
        TestScene {
            photos,
            chart,
            masks,
        }
    }

    fn random_theta(scene: &TestScene, rng: &mut ChaCha8Rng) -> Vec<Grid<f64>> {
        (0..scene.masks.candidates.len())
            .map(|k| {
                Grid::from_fn(scene.chart.width, scene.chart.height, |x, y| {
                    if *scene.masks.a_hat[k].get(x, y) {
                        rng.random_range(0.2..0.9)
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }

    #[test]
    fn quality_is_one_under_camera_with_color_consensus() {
        let res = 32;
        let rgb = Grid::new(res + 8, res + 8, [0.4, 0.6, 0.2]);
        let photo = aligned_photo(0, res, 4, 2.0, rgb);
        let scene = build_scene(vec![photo], res);
        let q = quality_matrix(&scene.chart, &scene.photos, &scene.masks, 0);
        // Q_c = 1 everywhere (single photo, sigma = 0, zero distance).
        // Q_a = 1 exactly under the camera; the camera sits over the chart
        // center between texels 15 and 16.
        let center = q.q.get(15, 15);
        assert!(*center > 0.9999, "center quality {center}");
        for (x, y, &active) in scene.masks.a_hat[0].enumerate() {
            if active {
                let v = *q.q.get(x, y);
                assert!(v > 0.9, "Q at ({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn quality_ranks_color_outlier_lowest() {
        let res = 16;
        let mk = |v: f64, id: usize, cx: f64| {
            oblique_photo(id, Vector3::new(cx, 0.1, 2.0), Grid::new(64, 64, [v, v, v]))
        };
        let photos = vec![mk(0.2, 0, -0.3), mk(0.2, 1, 0.0), mk(0.8, 2, 0.3)];
        let scene = build_scene(photos, res);
        assert_eq!(scene.masks.candidates.len(), 3);
        let ctx = quality_context(&scene.chart, &scene.photos, &scene.masks);
        let mut checked = 0;
        for y in 0..scene.chart.height {
            for x in 0..scene.chart.width {
                if (0..3).all(|k| *scene.masks.a_hat[k].get(x, y)) {
                    let q2 = *ctx.q[2].get(x, y);
                    let q0 = *ctx.q[0].get(x, y);
                    let q1 = *ctx.q[1].get(x, y);
                    assert!(q2 < q0 && q2 < q1, "outlier not lowest at ({x},{y})");
                    // Direct Gaussian oracle for the outlier's color term.
                    let mu = 0.4f64;
                    let sigma_sq = 0.08f64; // var per channel = ((3*0.04)+... pooled = 0.08
                    let dist_sq = 3.0 * (0.8f64 - mu).powi(2);
                    let expected_qc = (-dist_sq / (2.0 * sigma_sq + COLOR_CONSENSUS_EPS)).exp();
                    let p = scene.chart.texel_point(x, y);
                    let d = (scene.photos[2].camera.center() - p).normalize();
                    let qa = d.dot(&scene.chart.polygon.normal).max(0.0);
                    assert!((q2 - qa * expected_qc).abs() < 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn render_identity_roundtrip() {
        let res = 32;
        let margin = 4;
        let rgb = structured_rgb(res + 2 * margin, res + 2 * margin, 7);
        let photo = aligned_photo(0, res, margin, 2.0, rgb);
        let scene = build_scene(vec![photo], res);
        let theta = vec![scene.masks.a_hat[0].map(|&b| if b { 1.0 } else { 0.0 })];
        let (texture, _) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let rendered = render_polygon_view(&texture, &scene.chart, &scene.photos, &scene.masks, 0);
        let mut pixels = 0;
        for (px, py, r) in rendered.enumerate() {
            if let Some(r) = r {
                let i = scene.photos[0].rgb.get(px, py);
                for ch in 0..3 {
                    assert!(
                        (r[ch] - i[ch]).abs() < 1e-6,
                        "pixel ({px},{py}) ch {ch}: {} vs {}",
                        r[ch],
                        i[ch]
                    );
                }
                pixels += 1;
            }
        }
        assert!(pixels >= res * res, "only {pixels} mask pixels");
    }

    #[test]
    fn render_constant_texture_stays_constant() {
        let res = 16;
        let photo = oblique_photo(0, Vector3::new(0.7, -0.4, 1.8), structured_rgb(64, 64, 9));
        let scene = build_scene(vec![photo], res);
        let texture = TextureMap {
            rgb: Grid::new(res, res, [0.3, 0.5, 0.7]),
            hole: Grid::new(res, res, false),
        };
        let rendered = render_polygon_view(&texture, &scene.chart, &scene.photos, &scene.masks, 0);
        for (_, _, r) in rendered.enumerate() {
            if let Some(r) = r {
                assert!((r[0] - 0.3).abs() < 1e-12);
                assert!((r[1] - 0.5).abs() < 1e-12);
                assert!((r[2] - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn render_matches_explicit_inverse_homography_oracle() {
        let res = 16;
        let photo = oblique_photo(0, Vector3::new(0.9, 0.5, 1.4), structured_rgb(48, 48, 21));
        let scene = build_scene(vec![photo], res);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let texture = TextureMap {
            rgb: Grid::from_fn(res, res, |_, _| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                ]
            }),
            hole: Grid::new(res, res, false),
        };
        let rendered = render_polygon_view(&texture, &scene.chart, &scene.photos, &scene.masks, 0);

        // Oracle: hand-rolled adjugate inverse of the forward homography.
        let hf = scene.chart.homographies[0].as_ref().unwrap().forward;
        let adj = |m: &Matrix3<f64>| -> Matrix3<f64> {
            let mut a = Matrix3::zeros();
            a[(0, 0)] = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
            a[(0, 1)] = m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)];
            a[(0, 2)] = m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)];
            a[(1, 0)] = m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)];
            a[(1, 1)] = m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)];
            a[(1, 2)] = m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)];
            a[(2, 0)] = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
            a[(2, 1)] = m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)];
            a[(2, 2)] = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            a
        };
        let hinv = adj(&hf);
        for (px, py, r) in rendered.enumerate() {
            let Some(r) = r else { continue };
            let q = hinv * Vector3::new(px as f64, py as f64, 1.0);
            let (u, v) = (q.x / q.z, q.y / q.z);
            let cx = (u - scene.chart.min_u) / scene.chart.texel_size - 0.5;
            let cy = (v - scene.chart.min_v) / scene.chart.texel_size - 0.5;
            let expected = sample_color(&texture.rgb, cx, cy);
            for ch in 0..3 {
                assert!(
                    (r[ch] - expected[ch]).abs() < 1e-12,
                    "pixel ({px},{py}) ch {ch}"
                );
            }
        }
    }

    #[test]
    fn render_loss_zero_for_matching_texture_and_zero_weights() {
        let res = 16;
        let margin = 2;
        let rgb = structured_rgb(res + 2 * margin, res + 2 * margin, 3);
        let photo = aligned_photo(0, res, margin, 2.0, rgb);
        let scene = build_scene(vec![photo], res);
        let ones = vec![scene.masks.a_hat[0].map(|&b| if b { 1.0 } else { 0.0 })];
        let (texture, _) = compose_with_sums(&ones, &scene.chart, &scene.photos, &scene.masks);
        // Now evaluate with theta = 0 against that matching texture.
        let zeros = vec![Grid::new(res, res, 0.0)];
        let (_, sums) = compose_with_sums(&zeros, &scene.chart, &scene.photos, &scene.masks);
        let quality = quality_context(&scene.chart, &scene.photos, &scene.masks);
        let (value, _) = loss_render(
            &zeros,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &quality,
            &texture,
            &sums,
        );
        assert!(value < 1e-10, "value {value}");
    }

    #[test]
    fn render_loss_l1_counts_every_texel() {
        let res = 16;
        let margin = 2;
        let rgb = structured_rgb(res + 2 * margin, res + 2 * margin, 3);
        let photo = aligned_photo(0, res, margin, 2.0, rgb);
        let scene = build_scene(vec![photo], res);
        assert_eq!(scene.masks.a_hat[0].count_ones(), res * res);
        let ones = vec![scene.masks.a_hat[0].map(|&b| if b { 1.0 } else { 0.0 })];
        let (texture, sums) = compose_with_sums(&ones, &scene.chart, &scene.photos, &scene.masks);
        let quality = quality_context(&scene.chart, &scene.photos, &scene.masks);
        let (value, _) = loss_render(
            &ones,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &quality,
            &texture,
            &sums,
        );
        // Identity setup: residual term is ~0, leaving exactly the L1 sum.
        assert!(
            (value - (res * res) as f64).abs() < 1e-6,
            "value {value} vs {}",
            res * res
        );
    }

    fn assert_fd_matches(
        scene: &TestScene,
        theta: &[Grid<f64>],
        eval: &dyn Fn(&[Grid<f64>]) -> f64,
        grad: &[Grid<f64>],
        rel_tol: f64,
        kink_guard: Option<&dyn Fn(usize, usize, usize) -> bool>,
        samples: usize,
        seed: u64,
    ) {
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries: Vec<(usize, usize, usize)> = Vec::new();
        for k in 0..theta.len() {
            for (x, y, &active) in scene.masks.a_hat[k].enumerate() {
                if active {
                    entries.push((k, x, y));
                }
            }
        }
        entries.shuffle(&mut rng);
        let mut max_rel = 0.0f64;
        let mut tested = 0;
        for &(k, x, y) in entries.iter() {
            if tested >= samples {
                break;
            }
            if let Some(guard) = kink_guard {
                if !guard(k, x, y) {
                    continue;
                }
            }
            let mut plus = theta.to_vec();
            *plus[k].get_mut(x, y) += h;
            let mut minus = theta.to_vec();
            *minus[k].get_mut(x, y) -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let analytic = *grad[k].get(x, y);
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            let rel = (numeric - analytic).abs() / scale;
            max_rel = max_rel.max(rel);
            assert!(
                rel < rel_tol,
                "entry k={k} ({x},{y}): numeric {numeric} vs analytic {analytic} (rel {rel:.2e})"
            );
            tested += 1;
        }
        assert!(tested > 10, "too few testable entries: {tested}");
        let _ = max_rel;
    }

    #[test]
    fn render_gradient_matches_finite_differences() {
        let photos = vec![
            oblique_photo(0, Vector3::new(-0.6, 0.2, 1.6), structured_rgb(32, 32, 31)),
            oblique_photo(1, Vector3::new(0.1, -0.4, 2.0), structured_rgb(32, 32, 32)),
            oblique_photo(2, Vector3::new(0.6, 0.5, 1.5), structured_rgb(32, 32, 33)),
        ];
        let scene = build_scene(photos, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let theta = random_theta(&scene, &mut rng);
        let quality = quality_context(&scene.chart, &scene.photos, &scene.masks);

        let eval = |t: &[Grid<f64>]| -> f64 {
            let (texture, sums) = compose_with_sums(t, &scene.chart, &scene.photos, &scene.masks);
            loss_render(
                t,
                &scene.chart,
                &scene.photos,
                &scene.masks,
                &quality,
                &texture,
                &sums,
            )
            .0
        };
        let (texture, sums) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let (_, grad) = loss_render(
            &theta,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &quality,
            &texture,
            &sums,
        );
        assert_fd_matches(&scene, &theta, &eval, &grad, 1e-3, None, 48, 17);
    }

    #[test]
    fn perspective_loss_vanishes_for_fronto_parallel() {
        let res = 16;
        let far = 1e10;
        let photo = aligned_photo(0, res, 2, far, Grid::new(res + 4, res + 4, [0.5; 3]));
        let scene = build_scene(vec![photo], res);
        let guidance = crate::chart::guidance_direction(
            &scene.chart.polygon,
            &[&scene.photos[0]],
        );
        let stage = stage_context(&scene.chart, &scene.photos, &scene.masks, guidance);
        // Residual field is essentially zero.
        for (_, _, &r2) in stage.persp_sq[0].enumerate() {
            assert!(r2.sqrt() < 1e-9, "residual {}", r2.sqrt());
        }
        let theta = vec![Grid::new(res, res, 0.7)];
        let (value, _) = loss_perspective(&theta, &scene.masks, &stage);
        assert!(value < 1e-9);
    }

    #[test]
    fn perspective_loss_is_linear_and_matches_oracle() {
        let photos = vec![
            oblique_photo(0, Vector3::new(-0.8, 0.3, 1.2), structured_rgb(32, 32, 41)),
            oblique_photo(1, Vector3::new(0.9, -0.5, 1.9), structured_rgb(32, 32, 42)),
        ];
        let scene = build_scene(photos, 16);
        let refs: Vec<&Photo> = scene.photos.iter().collect();
        let guidance = crate::chart::guidance_direction(&scene.chart.polygon, &refs);
        let stage = stage_context(&scene.chart, &scene.photos, &scene.masks, guidance);
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let theta = random_theta(&scene, &mut rng);

        let (value, grad) = loss_perspective(&theta, &scene.masks, &stage);

        // Brute-force triple loop oracle.
        let mut oracle = 0.0;
        for k in 0..scene.masks.candidates.len() {
            let center = scene.photos[scene.masks.candidates[k]].camera.center();
            for y in 0..scene.chart.height {
                for x in 0..scene.chart.width {
                    if !*scene.masks.a_hat[k].get(x, y) {
                        continue;
                    }
                    let p = scene.chart.texel_point(x, y);
                    let d = (center - p).normalize();
                    let r = d - guidance;
                    oracle += theta[k].get(x, y) * r.norm_squared();
                }
            }
        }
        assert!((value - oracle).abs() < 1e-12 * oracle.max(1.0));

        // Exact linearity: doubling theta doubles the value bit-exactly.
        let doubled: Vec<Grid<f64>> = theta.iter().map(|g| g.map(|v| v * 2.0)).collect();
        let (value2, _) = loss_perspective(&doubled, &scene.masks, &stage);
        assert_eq!(value2, value * 2.0);

        // FD is exact for a linear function.
        let eval = |t: &[Grid<f64>]| loss_perspective(t, &scene.masks, &stage).0;
        assert_fd_matches(&scene, &theta, &eval, &grad, 1e-6, None, 32, 18);
    }

    #[test]
    fn parameter_loss_zero_for_constant_field() {
        let photos = vec![oblique_photo(
            0,
            Vector3::new(0.0, 0.0, 2.0),
            Grid::new(48, 48, [0.5; 3]),
        )];
        let scene = build_scene(photos, 16);
        let theta = vec![scene.masks.a_hat[0].map(|&b| if b { 0.6 } else { 0.0 })];
        let (texture, _) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let ctx = loss_context(&scene.chart, &scene.photos, &scene.masks, &texture);
        // Full mask + constant theta: every |difference| vanishes.
        assert_eq!(scene.masks.a_hat[0].count_ones(), 16 * 16);
        let (value, _) = loss_parameter(&theta, &scene.masks, &ctx, 0.5);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn parameter_loss_reduces_to_lambda_for_single_photo() {
        // Single photo: no overlap, so C = lambda_s regardless of D and G.
        let photos = vec![oblique_photo(
            0,
            Vector3::new(0.0, 0.0, 2.0),
            Grid::new(48, 48, [0.5; 3]),
        )];
        let scene = build_scene(photos, 16);
        let delta = 0.25;
        let mut theta = vec![scene.masks.a_hat[0].map(|&b| if b { 0.5 } else { 0.0 })];
        // One bump: exactly four neighbor pairs see |delta|... but only
        // pairs (t, up(t)) and (t, left(t)) count each difference once.
        *theta[0].get_mut(8, 8) = 0.5 + delta;
        let (texture, _) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let ctx = loss_context(&scene.chart, &scene.photos, &scene.masks, &texture);
        let (value, _) = loss_parameter(&theta, &scene.masks, &ctx, 0.5);
        // Pairs hitting the bump: (8,8)-(8,7), (8,8)-(7,8), (8,9)-(8,8), (9,8)-(8,8).
        let expected = 4.0 * 0.5 * delta;
        assert!((value - expected).abs() < 1e-12, "value {value} vs {expected}");
    }

    #[test]
    fn parameter_loss_matches_brute_oracle_and_fd() {
        let photos = vec![
            oblique_photo(0, Vector3::new(-0.4, 0.3, 1.7), structured_rgb(32, 32, 51)),
            oblique_photo(1, Vector3::new(0.5, -0.2, 1.4), structured_rgb(32, 32, 52)),
        ];
        let scene = build_scene(photos, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let theta = random_theta(&scene, &mut rng);
        let (texture, _) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let ctx = loss_context(&scene.chart, &scene.photos, &scene.masks, &texture);
        let lambda_s = 0.5;
        let (value, grad) = loss_parameter(&theta, &scene.masks, &ctx, lambda_s);

        // Brute-force oracle straight from the definition.
        let mut oracle = 0.0;
        for k in 0..scene.masks.candidates.len() {
            for y in 0..scene.chart.height {
                for x in 0..scene.chart.width {
                    let vt = if *scene.masks.a_hat[k].get(x, y) {
                        *theta[k].get(x, y)
                    } else {
                        0.0
                    };
                    let m = if *scene.masks.overlap[k].get(x, y) {
                        1.0
                    } else {
                        0.0
                    };
                    if y > 0 {
                        let vq = if *scene.masks.a_hat[k].get(x, y - 1) {
                            *theta[k].get(x, y - 1)
                        } else {
                            0.0
                        };
                        oracle += (m * ctx.d_up.get(x, y) + lambda_s) * (vt - vq).abs();
                    }
                    if x > 0 {
                        let vq = if *scene.masks.a_hat[k].get(x - 1, y) {
                            *theta[k].get(x - 1, y)
                        } else {
                            0.0
                        };
                        oracle += (m * ctx.d_left.get(x, y) + lambda_s) * (vt - vq).abs();
                    }
                }
            }
        }
        assert!((value - oracle).abs() < 1e-12 * oracle.max(1.0));

        // FD away from the |.| kinks: every incident pair must differ by
        // more than 1e-3.
        let guard = |k: usize, x: usize, y: usize| -> bool {
            let w = scene.chart.width;
            let h = scene.chart.height;
            let val = |xx: usize, yy: usize| -> f64 {
                if *scene.masks.a_hat[k].get(xx, yy) {
                    *theta[k].get(xx, yy)
                } else {
                    0.0
                }
            };
            let t = val(x, y);
            let mut ok = true;
            if y > 0 {
                ok &= (t - val(x, y - 1)).abs() > 1e-3;
            }
            if x > 0 {
                ok &= (t - val(x - 1, y)).abs() > 1e-3;
            }
            if y + 1 < h {
                ok &= (t - val(x, y + 1)).abs() > 1e-3;
            }
            if x + 1 < w {
                ok &= (t - val(x + 1, y)).abs() > 1e-3;
            }
            ok
        };
        let eval = |t: &[Grid<f64>]| loss_parameter(t, &scene.masks, &ctx, lambda_s).0;
        assert_fd_matches(&scene, &theta, &eval, &grad, 1e-4, Some(&guard), 32, 19);
    }

    #[test]
    fn total_loss_recombines_terms_exactly() {
        let photos = vec![
            oblique_photo(0, Vector3::new(-0.5, 0.1, 1.5), structured_rgb(32, 32, 61)),
            oblique_photo(1, Vector3::new(0.4, -0.3, 1.8), structured_rgb(32, 32, 62)),
        ];
        let scene = build_scene(photos, 16);
        let refs: Vec<&Photo> = scene.photos.iter().collect();
        let guidance = crate::chart::guidance_direction(&scene.chart.polygon, &refs);
        let stage = stage_context(&scene.chart, &scene.photos, &scene.masks, guidance);
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        let theta = random_theta(&scene, &mut rng);
        let (texture, sums) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let ctx = loss_context(&scene.chart, &scene.photos, &scene.masks, &texture);
        let params = LossParams::default();

        let breakdown = total_loss_and_grad(
            &theta,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &stage,
            &ctx,
            &texture,
            &sums,
            &params,
        );
        let expected = params.alpha * breakdown.render
            + params.beta * breakdown.perspective
            + params.omega * breakdown.parameter;
        assert!((breakdown.total - expected).abs() < 1e-12);

        let (_, g_r) = loss_render(
            &theta,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &ctx.quality,
            &texture,
            &sums,
        );
        let (_, g_p) = loss_perspective(&theta, &scene.masks, &stage);
        let (_, g_a) = loss_parameter(&theta, &scene.masks, &ctx, params.lambda_s);
        for k in 0..theta.len() {
            for (x, y, &g) in breakdown.grad[k].enumerate() {
                if !*scene.masks.a_hat[k].get(x, y) {
                    assert_eq!(g, 0.0);
                    continue;
                }
                let expected = params.alpha * g_r[k].get(x, y)
                    + params.beta * g_p[k].get(x, y)
                    + params.omega * g_a[k].get(x, y);
                assert!((g - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn only_perspective_scales_by_beta() {
        let photos = vec![oblique_photo(
            0,
            Vector3::new(0.6, 0.4, 1.3),
            structured_rgb(32, 32, 71),
        )];
        let scene = build_scene(photos, 16);
        let refs: Vec<&Photo> = scene.photos.iter().collect();
        let guidance = crate::chart::guidance_direction(&scene.chart.polygon, &refs);
        let stage = stage_context(&scene.chart, &scene.photos, &scene.masks, guidance);
        let theta = vec![scene.masks.a_hat[0].map(|&b| if b { 0.5 } else { 0.0 })];
        let (v, _) = loss_perspective(&theta, &scene.masks, &stage);
        assert!(v > 0.0);
        // With alpha = omega = 0, total = beta * v = 2v under defaults.
        let (texture, sums) = compose_with_sums(&theta, &scene.chart, &scene.photos, &scene.masks);
        let ctx = loss_context(&scene.chart, &scene.photos, &scene.masks, &texture);
        let params = LossParams {
            alpha: 0.0,
            beta: 2.0,
            omega: 0.0,
            lambda_s: 0.5,
        };
        let breakdown = total_loss_and_grad(
            &theta,
            &scene.chart,
            &scene.photos,
            &scene.masks,
            &stage,
            &ctx,
            &texture,
            &sums,
            &params,
        );
        assert!((breakdown.total - 2.0 * v).abs() < 1e-12);
    }
}
