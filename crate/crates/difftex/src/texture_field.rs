//! Raw blending weights, texture composition and resolution doubling.
//!
//! Raw weights `theta` live in `[0,1]` per candidate photo per texel and are
//! zero outside the activation mask. Composition normalizes them per texel
//! (uniform fallback over active photos when the sum underflows) and blends
//! bilinearly sampled photo colors. Between coarse-to-fine stages the field
//! is upscaled with align-corners bilinear interpolation, which preserves
//! constant and linear fields exactly.

use crate::chart::UvChart;
use crate::grid::{sample_color, Color, Grid};
use crate::scene::Photo;
use crate::visibility::MaskSet;

/// Per-texel sums below this use the uniform fallback over active photos.
pub const WEIGHT_SUM_EPS: f64 = 1e-12;

/// Raw blending parameters for one polygon, plus Adam moment buffers.
/// Grids are parallel to the mask set's candidate list.
#[derive(Clone, Debug)]
pub struct WeightField {
    pub theta: Vec<Grid<f64>>,
    pub m1: Vec<Grid<f64>>,
    pub m2: Vec<Grid<f64>>,
    pub step: u64,
}

impl WeightField {
    pub fn zeros(count: usize, width: usize, height: usize) -> Self {
        Self {
            theta: vec![Grid::new(width, height, 0.0); count],
            m1: vec![Grid::new(width, height, 0.0); count],
            m2: vec![Grid::new(width, height, 0.0); count],
            step: 0,
        }
    }

    /// Fresh moments (used when a stage begins).
    pub fn reset_moments(&mut self) {
        for g in self.m1.iter_mut().chain(self.m2.iter_mut()) {
            g.fill(0.0);
        }
        self.step = 0;
    }
}

/// Composed texture: RGB plus the mask of texels no active photo covers.
#[derive(Clone, Debug)]
pub struct TextureMap {
    pub rgb: Grid<Color>,
    pub hole: Grid<bool>,
}

impl TextureMap {
    pub fn hole_fraction(&self) -> f64 {
        if self.hole.is_empty() {
            return 0.0;
        }
        self.hole.count_ones() as f64 / self.hole.len() as f64
    }
}

/// Bilinearly sample photo `k` (by candidate index) at the mapped position
/// of texel `(x, y)`. `None` when the texel does not project into the image.
#[inline]
pub fn sample_photo_at_texel(
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
    k: usize,
    x: usize,
    y: usize,
) -> Option<Color> {
    let global = masks.candidates[k];
    let photo = &photos[global];
    let ((px, py), _) = chart.texel_to_pixel(photo, global, x, y).visible()?;
    Some(sample_color(&photo.rgb, px, py))
}

/// Per-stage cache of the photo colors sampled at every texel center. The
/// mapping is fixed once a chart is built, so every per-iteration pass
/// (composition, statistics, gradients, elimination) reads from here.
#[derive(Clone, Debug)]
pub struct SampleCache {
    pub color: Vec<Grid<Color>>,
    pub valid: Vec<Grid<bool>>,
}

impl SampleCache {
    #[inline]
    pub fn get(&self, k: usize, x: usize, y: usize) -> Option<Color> {
        if *self.valid[k].get(x, y) {
            Some(*self.color[k].get(x, y))
        } else {
            None
        }
    }
}

pub fn build_sample_cache(chart: &UvChart, photos: &[Photo], masks: &MaskSet) -> SampleCache {
    let (w, h) = (chart.width, chart.height);
    let mut color = Vec::with_capacity(masks.candidates.len());
    let mut valid = Vec::with_capacity(masks.candidates.len());
    for k in 0..masks.candidates.len() {
        let mut c = Grid::new(w, h, [0.0; 3]);
        let mut v = Grid::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                if let Some(s) = sample_photo_at_texel(chart, photos, masks, k, x, y) {
                    c.set(x, y, s);
                    v.set(x, y, true);
                }
            }
        }
        color.push(c);
        valid.push(v);
    }
    SampleCache { color, valid }
}

/// Initialize raw weights from per-photo quality grids: `theta = Q` inside
/// the activation mask, zero outside.
pub fn init_weights(masks: &MaskSet, quality: &[Grid<f64>]) -> WeightField {
    assert_eq!(quality.len(), masks.candidates.len());
    let (w, h) = if masks.candidates.is_empty() {
        (0, 0)
    } else {
        (masks.a_hat[0].width(), masks.a_hat[0].height())
    };
    let mut field = WeightField::zeros(masks.candidates.len(), w, h);
    for k in 0..masks.candidates.len() {
        field.theta[k] = Grid::from_fn(w, h, |x, y| {
            if masks.active[k] && *masks.a_hat[k].get(x, y) {
                quality[k].get(x, y).clamp(0.0, 1.0)
            } else {
                0.0
            }
        });
    }
    field
}

/// Normalized blend weights at one texel (per candidate; zero when the
/// photo is inactive there). Sums to one unless the texel is a hole.
pub fn blend_weights_at(
    theta: &[Grid<f64>],
    masks: &MaskSet,
    x: usize,
    y: usize,
) -> Vec<f64> {
    let n = masks.candidates.len();
    let mut weights = vec![0.0; n];
    let mut sum = 0.0;
    let mut active = 0usize;
    for k in 0..n {
        if masks.active[k] && *masks.a_hat[k].get(x, y) {
            sum += *theta[k].get(x, y);
            active += 1;
        }
    }
    if active == 0 {
        return weights;
    }
    for k in 0..n {
        if masks.active[k] && *masks.a_hat[k].get(x, y) {
            weights[k] = if sum < WEIGHT_SUM_EPS {
                1.0 / active as f64
            } else {
                *theta[k].get(x, y) / sum
            };
        }
    }
    weights
}

/// Compose the texture map and return the per-texel raw weight sums
/// (needed by the gradient of the render loss).
pub fn compose_with_sums(
    theta: &[Grid<f64>],
    masks: &MaskSet,
    cache: &SampleCache,
) -> (TextureMap, Grid<f64>) {
    let n = masks.candidates.len();
    let (w, h) = if n == 0 {
        (0, 0)
    } else {
        (masks.a_hat[0].width(), masks.a_hat[0].height())
    };
    let mut rgb = Grid::new(w, h, [0.0; 3]);
    let mut hole = Grid::new(w, h, false);
    let mut sums = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut active = 0usize;
            for k in 0..n {
                if masks.active[k] && *masks.a_hat[k].get(x, y) {
                    sum += *theta[k].get(x, y);
                    active += 1;
                }
            }
            sums.set(x, y, sum);
            if active == 0 {
                hole.set(x, y, true);
                continue;
            }
            let uniform = sum < WEIGHT_SUM_EPS;
            let mut out = [0.0f64; 3];
            for k in 0..n {
                if !(masks.active[k] && *masks.a_hat[k].get(x, y)) {
                    continue;
                }
                let wgt = if uniform {
                    1.0 / active as f64
                } else {
                    *theta[k].get(x, y) / sum
                };
                if wgt == 0.0 {
                    continue;
                }
                if let Some(c) = cache.get(k, x, y) {
                    out[0] += wgt * c[0];
                    out[1] += wgt * c[1];
                    out[2] += wgt * c[2];
                }
            }
            rgb.set(x, y, out);
        }
    }
    (TextureMap { rgb, hole }, sums)
}

/// Weighted blend of the photos (the per-texel normalized weighted sum).
pub fn compose_texture(
    theta: &[Grid<f64>],
    chart: &UvChart,
    photos: &[Photo],
    masks: &MaskSet,
) -> TextureMap {
    let cache = build_sample_cache(chart, photos, masks);
    compose_with_sums(theta, masks, &cache).0
}

/// Align-corners bilinear resample. Constants and linear ramps are
/// reproduced exactly; no sample position ever leaves the source grid, so
/// the edge-clamp boundary is never exercised.
pub fn resample_bilinear(grid: &Grid<f64>, new_w: usize, new_h: usize) -> Grid<f64> {
    let sx = if new_w > 1 {
        (grid.width() - 1) as f64 / (new_w - 1) as f64
    } else {
        0.0
    };
    let sy = if new_h > 1 {
        (grid.height() - 1) as f64 / (new_h - 1) as f64
    } else {
        0.0
    };
    Grid::from_fn(new_w, new_h, |x, y| {
        crate::grid::sample_scalar(grid, x as f64 * sx, y as f64 * sy)
    })
}

/// Upscale the raw weights to a new resolution, clamped to `[0,1]`, with
/// fresh Adam moments.
pub fn upscale_weights(field: &WeightField, new_w: usize, new_h: usize) -> WeightField {
    let theta = field
        .theta
        .iter()
        .map(|g| {
            let mut up = resample_bilinear(g, new_w, new_h);
            for v in up.data_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            up
        })
        .collect();
    WeightField {
        theta,
        m1: vec![Grid::new(new_w, new_h, 0.0); field.m1.len()],
        m2: vec![Grid::new(new_w, new_h, 0.0); field.m2.len()],
        step: 0,
    }
}

/// Dominant-source photo per texel: the active photo with the largest raw
/// weight (ties to the lowest candidate index). `None` marks holes.
pub fn source_map(theta: &[Grid<f64>], masks: &MaskSet) -> Grid<Option<usize>> {
    if masks.candidates.is_empty() {
        return Grid::new(0, 0, None);
    }
    let (w, h) = (masks.a_hat[0].width(), masks.a_hat[0].height());
    Grid::from_fn(w, h, |x, y| {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..masks.candidates.len() {
            if !(masks.active[k] && *masks.a_hat[k].get(x, y)) {
                continue;
            }
            let t = *theta[k].get(x, y);
            if best.map(|(_, bt)| t > bt).unwrap_or(true) {
                best = Some((masks.candidates[k], t));
            }
        }
        best.map(|(id, _)| id)
    })
}

/// Fill hole texels by iterative 4-neighbor diffusion from covered texels
/// (Jacobi sweeps, deterministic). The hole mask itself is left untouched so
/// reports still see the original coverage. Isolated all-hole maps fill with
/// mid-gray. Returns the number of texels filled.
pub fn fill_holes(texture: &mut TextureMap) -> usize {
    let (w, h) = (texture.rgb.width(), texture.rgb.height());
    let mut remaining = texture.hole.clone();
    let total = remaining.count_ones();
    if total == 0 {
        return 0;
    }
    if total == remaining.len() {
        texture.rgb.fill([0.5; 3]);
        return total;
    }
    let mut filled = 0usize;
    while filled < total {
        let mut updates: Vec<(usize, usize, Color)> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !*remaining.get(x, y) {
                    continue;
                }
                let mut acc = [0.0f64; 3];
                let mut count = 0usize;
                let mut push = |nx: usize, ny: usize| {
                    if !*remaining.get(nx, ny) {
                        let c = texture.rgb.get(nx, ny);
                        acc[0] += c[0];
                        acc[1] += c[1];
                        acc[2] += c[2];
                        count += 1;
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
                if count > 0 {
                    updates.push((
                        x,
                        y,
                        [
                            acc[0] / count as f64,
                            acc[1] / count as f64,
                            acc[2] / count as f64,
                        ],
                    ));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (x, y, c) in updates {
            texture.rgb.set(x, y, c);
            remaining.set(x, y, false);
            filled += 1;
        }
    }
    filled
}
