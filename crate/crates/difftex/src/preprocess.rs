//! Input photo filtering and brightness harmonization.
//!
//! Filtering drops photos that see no polygon, photos whose
//! variance-of-Laplacian blur score falls below the threshold, and photos
//! whose best viewing angle against every visible polygon is beyond the
//! incline limit. Brightness is then harmonized by matching every photo's
//! HSV value channel to the average cumulative histogram over all photos
//! (256 bins, monotone CDF matching); hue and saturation are untouched.

use crate::error::{Error, Result};
use crate::grid::{luminance, Color, Grid};
use crate::scene::{Photo, ProxyModel, SceneConfig};
use crate::visibility::render_depth_maps;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const HIST_BINS: usize = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhotoFilterEntry {
    pub id: usize,
    pub name: String,
    pub kept: bool,
    pub reason: Option<String>,
    pub blur_score: f64,
    pub min_incline_deg: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct PhotoFilterReport {
    pub entries: Vec<PhotoFilterEntry>,
}

/// Variance of the 3x3 Laplacian on the `[0,255]` grayscale image.
pub fn blur_score(rgb: &Grid<Color>) -> f64 {
    let (w, h) = (rgb.width(), rgb.height());
    if w < 3 || h < 3 {
        return 0.0;
    }
    let gray = Grid::from_fn(w, h, |x, y| luminance(*rgb.get(x, y)) * 255.0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let lap = gray.get(x - 1, y) + gray.get(x + 1, y) + gray.get(x, y - 1)
                + gray.get(x, y + 1)
                - 4.0 * gray.get(x, y);
            sum += lap;
            sum_sq += lap * lap;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    (sum_sq / count as f64 - mean * mean).max(0.0)
}

/// Drop invisible, blurry, and extremely inclined photos.
pub fn filter_photos(
    model: &ProxyModel,
    photos: Vec<Photo>,
    config: &SceneConfig,
) -> Result<(Vec<Photo>, PhotoFilterReport)> {
    let depth_maps = render_depth_maps(model, &photos)?;
    let mut report = PhotoFilterReport::default();
    let mut kept = Vec::new();
    for (pi, photo) in photos.into_iter().enumerate() {
        let visible: Vec<usize> = {
            let mut seen = vec![false; model.polygons.len()];
            for (_, _, &id) in depth_maps[pi].polygon_id.enumerate() {
                if id >= 0 {
                    seen[id as usize] = true;
                }
            }
            seen.iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(|(i, _)| i)
                .collect()
        };
        let score = blur_score(&photo.rgb);
        let min_incline = visible
            .iter()
            .map(|&i| {
                let poly = &model.polygons[i];
                let d = (photo.camera.center() - poly.centroid()).normalize();
                d.dot(&poly.normal).clamp(-1.0, 1.0).acos().to_degrees()
            })
            .fold(f64::INFINITY, f64::min);

        let reason = if visible.is_empty() {
            Some("invisible".to_string())
        } else if score < config.blur_threshold {
            Some("blurry".to_string())
        } else if min_incline > config.incline_limit_deg {
            Some("inclined".to_string())
        } else {
            None
        };
        report.entries.push(PhotoFilterEntry {
            id: photo.id,
            name: photo.name.clone(),
            kept: reason.is_none(),
            reason: reason.clone(),
            blur_score: score,
            min_incline_deg: if min_incline.is_finite() {
                Some(min_incline)
            } else {
                None
            },
        });
        if reason.is_none() {
            kept.push(photo);
        }
    }
    if kept.is_empty() {
        let attached = serde_json::to_string(&report).unwrap_or_default();
        return Err(Error::AllPhotosFiltered(attached));
    }
    Ok((kept, report))
}

/// RGB in `[0,1]` to HSV with `h` in degrees `[0, 360)`.
pub fn rgb_to_hsv(c: Color) -> (f64, f64, f64) {
    let max = c[0].max(c[1]).max(c[2]);
    let min = c[0].min(c[1]).min(c[2]);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == c[0] {
        60.0 * (((c[1] - c[2]) / delta).rem_euclid(6.0))
    } else if max == c[1] {
        60.0 * ((c[2] - c[0]) / delta + 2.0)
    } else {
        60.0 * ((c[0] - c[1]) / delta + 4.0)
    };
    (h, s, v)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Color {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        (r + m).clamp(0.0, 1.0),
        (g + m).clamp(0.0, 1.0),
        (b + m).clamp(0.0, 1.0),
    ]
}

#[inline]
fn v_bin(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * 255.0).round() as usize).min(HIST_BINS - 1)
}

/// Normalized cumulative histogram of the value channel.
pub fn value_cdf(rgb: &Grid<Color>) -> [f64; HIST_BINS] {
    let mut hist = [0.0f64; HIST_BINS];
    for (_, _, c) in rgb.enumerate() {
        let (_, _, v) = rgb_to_hsv(*c);
        hist[v_bin(v)] += 1.0;
    }
    let total: f64 = rgb.len() as f64;
    let mut cdf = [0.0f64; HIST_BINS];
    let mut acc = 0.0;
    for (i, h) in hist.iter().enumerate() {
        acc += h / total;
        cdf[i] = acc;
    }
    cdf
}

/// Match every photo's V channel to the average CDF over all photos.
/// Monotone per-photo lookup; H and S unchanged; output clamped to `[0,1]`.
pub fn histogram_match(photos: Vec<Photo>) -> Vec<Photo> {
    if photos.is_empty() {
        return photos;
    }
    let cdfs: Vec<[f64; HIST_BINS]> = photos.par_iter().map(|p| value_cdf(&p.rgb)).collect();
    // Reference: average CDF, accumulated in photo order.
    let mut reference = [0.0f64; HIST_BINS];
    for cdf in &cdfs {
        for (r, c) in reference.iter_mut().zip(cdf.iter()) {
            *r += c;
        }
    }
    for r in reference.iter_mut() {
        *r /= photos.len() as f64;
    }

    photos
        .into_par_iter()
        .zip(cdfs)
        .map(|(mut photo, cdf)| {
            // Monotone nearest-value lookup: for each source bin, the
            // reference bin whose CDF is closest. Plateau bins below the
            // query are crossed; ties above resolve to the lower bin, so
            // identical inputs map to themselves exactly.
            let mut lut = [0usize; HIST_BINS];
            let mut r = 0usize;
            for (b, lut_b) in lut.iter_mut().enumerate() {
                let q = cdf[b];
                while r + 1 < HIST_BINS {
                    let cur = (reference[r] - q).abs();
                    let next = (reference[r + 1] - q).abs();
                    if next < cur || (next == cur && reference[r + 1] < q) {
                        r += 1;
                    } else {
                        break;
                    }
                }
                *lut_b = r;
            }
            for c in photo.rgb.data_mut() {
                let (h, s, v) = rgb_to_hsv(*c);
                let v_new = lut[v_bin(v)] as f64 / 255.0;
                *c = hsv_to_rgb(h, s, v_new);
            }
            photo
        })
        .collect()
}

/// Earth mover's distance between one-dimensional CDFs (L1 between CDFs).
pub fn cdf_emd(a: &[f64; HIST_BINS], b: &[f64; HIST_BINS]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}
