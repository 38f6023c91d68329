//! Quantitative evaluation: per-texel error percentiles, single-scale SSIM,
//! and the texel-source perspective-quality scores.
//!
//! The perspective scores are computed from the dominant-source texel map:
//! frontality is the mean clamped cosine between each texel's source viewing
//! direction and the polygon normal; view consistency averages
//! `0.5 * (1 + d_src(t) . d_src(q))` over 4-neighbor pairs. They stand in
//! for the reference formulation and are flagged approximate in reports.

use crate::chart::UvChart;
use crate::error::{Error, Result};
use crate::grid::{color_dist, Color, Grid};
use crate::scene::Photo;
use serde::{Deserialize, Serialize};

/// Per-texel Euclidean RGB distances, hole texels excluded.
pub fn error_distances(
    recon: &Grid<Color>,
    ground_truth: &Grid<Color>,
    holes: Option<&Grid<bool>>,
) -> Result<Vec<f64>> {
    if recon.width() != ground_truth.width() || recon.height() != ground_truth.height() {
        return Err(Error::ResolutionMismatch {
            chart_w: recon.width(),
            chart_h: recon.height(),
            tex_w: ground_truth.width(),
            tex_h: ground_truth.height(),
        });
    }
    let mut distances = Vec::with_capacity(recon.len());
    for (x, y, c) in recon.enumerate() {
        if let Some(h) = holes {
            if *h.get(x, y) {
                continue;
            }
        }
        distances.push(color_dist(*c, *ground_truth.get(x, y)));
    }
    Ok(distances)
}

/// Nearest-rank percentile (no interpolation); `p` in percent `(0, 100]`.
pub fn percentile_nearest_rank(values: &mut [f64], p: f64) -> f64 {
    assert!(p > 0.0 && p <= 100.0, "percentile out of range");
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// The p-th percentile of the per-texel RGB distance between a
/// reconstruction and its ground truth.
pub fn error_percentile(
    recon: &Grid<Color>,
    ground_truth: &Grid<Color>,
    holes: Option<&Grid<bool>>,
    p: f64,
) -> Result<f64> {
    let mut distances = error_distances(recon, ground_truth, holes)?;
    Ok(percentile_nearest_rank(&mut distances, p))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-region Gaussian filter (output shrinks by window-1).
fn gauss_valid(src: &Grid<f64>) -> Grid<f64> {
    let k = gaussian_kernel();
    let (w, h) = (src.width(), src.height());
    let ow = w - SSIM_WINDOW + 1;
    let horiz = Grid::from_fn(ow, h, |x, y| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            acc += kv * src.get(x + i, y);
        }
        acc
    });
    let oh = h - SSIM_WINDOW + 1;
    Grid::from_fn(ow, oh, |x, y| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            acc += kv * horiz.get(x, y + i);
        }
        acc
    })
}

/// Standard single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01,
/// K2=0.03, dynamic range 1, computed per channel over valid windows and
/// averaged.
pub fn ssim(a: &Grid<Color>, b: &Grid<Color>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ResolutionMismatch {
            chart_w: a.width(),
            chart_h: a.height(),
            tex_w: b.width(),
            tex_h: b.height(),
        });
    }
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::LayoutMismatch(format!(
            "image {}x{} smaller than the {}x{} SSIM window",
            a.width(),
            a.height(),
            SSIM_WINDOW,
            SSIM_WINDOW
        )));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ch in 0..3 {
        let xa = a.map(|c| c[ch]);
        let xb = b.map(|c| c[ch]);
        let mu_a = gauss_valid(&xa);
        let mu_b = gauss_valid(&xb);
        let aa = gauss_valid(&xa.map(|v| v * v));
        let bb = gauss_valid(&xb.map(|v| v * v));
        let ab = {
            let prod = Grid::from_fn(xa.width(), xa.height(), |x, y| xa.get(x, y) * xb.get(x, y));
            gauss_valid(&prod)
        };
        let mut acc = 0.0;
        for (x, y, &ma) in mu_a.enumerate() {
            let mb = *mu_b.get(x, y);
            // No clamping: identical inputs then give va == vb == cov to the
            // last bit, so ssim(x, x) is exactly 1.
            let va = aa.get(x, y) - ma * ma;
            let vb = bb.get(x, y) - mb * mb;
            let cov = ab.get(x, y) - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            acc += s;
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

/// Frontality and view-consistency from the dominant-source map. `source`
/// holds positions into `photos`; `None` marks holes.
pub fn perspective_quality(
    source: &Grid<Option<usize>>,
    chart: &UvChart,
    photos: &[Photo],
) -> (f64, f64) {
    let normal = chart.polygon.normal;
    let dir_at = |x: usize, y: usize, pi: usize| {
        let p = chart.texel_point(x, y);
        (photos[pi].camera.center() - p).normalize()
    };

    let mut front_acc = 0.0;
    let mut front_count = 0usize;
    for (x, y, s) in source.enumerate() {
        if let Some(pi) = s {
            front_acc += dir_at(x, y, *pi).dot(&normal).max(0.0);
            front_count += 1;
        }
    }
    let q_front = if front_count == 0 {
        0.0
    } else {
        front_acc / front_count as f64
    };

    let mut vc_acc = 0.0;
    let mut vc_count = 0usize;
    let (w, h) = (source.width(), source.height());
    for y in 0..h {
        for x in 0..w {
            let Some(pi) = source.get(x, y) else { continue };
            let mut pair = |qx: usize, qy: usize| {
                if let Some(pj) = source.get(qx, qy) {
                    let di = dir_at(x, y, *pi);
                    let dj = dir_at(qx, qy, *pj);
                    vc_acc += 0.5 * (1.0 + di.dot(&dj));
                    vc_count += 1;
                }
            };
            if y > 0 {
                pair(x, y - 1);
            }
            if x > 0 {
                pair(x - 1, y);
            }
        }
    }
    let q_vc = if vc_count == 0 {
        0.0
    } else {
        vc_acc / vc_count as f64
    };
    (q_front, q_vc)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonMetrics {
    pub polygon: usize,
    pub error_p90: f64,
    pub error_p95: f64,
    pub ssim: f64,
    pub q_front: f64,
    pub q_vc: f64,
    pub hole_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_polygon: Vec<PolygonMetrics>,
    /// Percentiles over the union of all polygons' non-hole texels.
    pub aggregate_error_p90: f64,
    pub aggregate_error_p95: f64,
    pub mean_ssim: f64,
    pub mean_q_front: f64,
    pub mean_q_vc: f64,
    /// The perspective scores are a declared approximation of the reference
    /// formulation.
    pub approximate_perspective_metrics: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at_rotation, Camera};
    use crate::scene::ProxyPolygon;
    use nalgebra::Vector3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_have_zero_error_and_unit_ssim() {
        let img = Grid::from_fn(64, 64, |x, y| {
            [
                (x as f64 / 63.0),
                (y as f64 / 63.0),
                ((x + y) % 7) as f64 / 6.0,
            ]
        });
        for p in [10.0, 50.0, 90.0, 95.0, 100.0] {
            assert_eq!(error_percentile(&img, &img, None, p).unwrap(), 0.0);
        }
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn constant_offset_hits_every_percentile() {
        let a = Grid::new(32, 32, [0.4, 0.4, 0.4]);
        let b = Grid::new(32, 32, [0.5, 0.4, 0.4]);
        for p in [1.0, 50.0, 95.0] {
            let e = error_percentile(&a, &b, None, p).unwrap();
            assert!((e - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn percentile_matches_full_sort_oracle_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Grid::from_fn(64, 64, |_, _| {
            [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ]
        });
        let b = Grid::from_fn(64, 64, |_, _| {
            [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ]
        });
        let mut dists = error_distances(&a, &b, None).unwrap();
        dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut prev = 0.0;
        for p in [5.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 100.0] {
            let e = error_percentile(&a, &b, None, p).unwrap();
            // Full-sort nearest-rank oracle.
            let rank = ((p / 100.0) * dists.len() as f64).ceil() as usize;
            assert_eq!(e, dists[rank - 1]);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn holes_are_excluded() {
        let a = Grid::new(16, 16, [0.0; 3]);
        let mut b = Grid::new(16, 16, [0.0; 3]);
        b.set(3, 3, [1.0, 1.0, 1.0]);
        let mut holes = Grid::new(16, 16, false);
        holes.set(3, 3, true);
        assert_eq!(error_percentile(&a, &b, Some(&holes), 100.0).unwrap(), 0.0);
    }

    #[test]
    fn ssim_is_symmetric_and_detects_negation() {
        let checker = Grid::from_fn(32, 32, |x, y| {
            let v = if (x / 4 + y / 4) % 2 == 0 { 1.0 } else { 0.0 };
            [v, v, v]
        });
        let negative = checker.map(|c| [1.0 - c[0], 1.0 - c[1], 1.0 - c[2]]);
        let s_ab = ssim(&checker, &negative).unwrap();
        let s_ba = ssim(&negative, &checker).unwrap();
        assert!((s_ab - s_ba).abs() < 1e-12);
        assert!(s_ab < 0.1, "ssim of negation: {s_ab}");
    }

    #[test]
    fn ssim_of_constant_shift_matches_closed_form() {
        let a = Grid::new(24, 24, [0.5; 3]);
        let b = Grid::new(24, 24, [0.51; 3]);
        let s = ssim(&a, &b).unwrap();
        // Variances are zero: contrast/structure term is exactly 1 and the
        // luminance term is (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1).
        let c1 = SSIM_K1 * SSIM_K1;
        let expected = (2.0 * 0.5 * 0.51 + c1) / (0.25 + 0.51 * 0.51 + c1);
        assert!((s - expected).abs() < 1e-9, "{s} vs {expected}");
        assert!(s > 0.95);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Grid::new(8, 8, [0.5; 3]);
        assert!(ssim(&a, &a).is_err());
    }

    fn far_photo(id: usize, dir: Vector3<f64>) -> Photo {
        let center = dir * 1e9;
        let rotation = look_at_rotation(&center, &Vector3::zeros(), &Vector3::z());
        Photo {
            id,
            name: format!("photo_{id:03}.png"),
            camera: Camera {
                width: 16,
                height: 16,
                fx: 1e10,
                fy: 1e10,
                cx: 7.5,
                cy: 7.5,
                rotation,
                translation: -rotation * center,
            },
            rgb: Grid::new(16, 16, [0.5; 3]),
        }
    }

    fn unit_wall_chart(photos: &[Photo]) -> UvChart {
        let poly = ProxyPolygon::from_vertices(
            0,
            vec![
                Vector3::new(-0.5, -0.5, 0.0),
                Vector3::new(0.5, -0.5, 0.0),
                Vector3::new(0.5, 0.5, 0.0),
                Vector3::new(-0.5, 0.5, 0.0),
            ],
        )
        .unwrap();
        UvChart::build(&poly, 16, photos).unwrap()
    }

    #[test]
    fn single_fronto_source_scores_unity() {
        let photos = vec![far_photo(0, Vector3::z())];
        let chart = unit_wall_chart(&photos);
        let source = Grid::new(16, 16, Some(0usize));
        let (q_front, q_vc) = perspective_quality(&source, &chart, &photos);
        assert!(q_front > 1.0 - 1e-6, "q_front {q_front}");
        assert!(q_vc > 1.0 - 1e-12, "q_vc {q_vc}");
    }

    #[test]
    fn alternating_orthogonal_sources_halve_consistency() {
        // Two sources with orthogonal viewing directions, alternating per
        // texel: every neighbor pair mixes them, so q_vc = 0.5.
        let photos = vec![far_photo(0, Vector3::z()), far_photo(1, Vector3::x())];
        let chart = unit_wall_chart(&photos);
        let source = Grid::from_fn(16, 16, |x, y| Some((x + y) % 2));
        let (_, q_vc) = perspective_quality(&source, &chart, &photos);
        assert!((q_vc - 0.5).abs() < 1e-6, "q_vc {q_vc}");
    }

    #[test]
    fn quality_is_permutation_invariant() {
        let photos = vec![
            far_photo(0, Vector3::new(0.3, 0.2, 1.0).normalize()),
            far_photo(1, Vector3::new(-0.4, 0.1, 1.0).normalize()),
        ];
        let chart = unit_wall_chart(&photos);
        let source = Grid::from_fn(16, 16, |x, y| Some((x * 3 + y) % 2));
        let (f1, v1) = perspective_quality(&source, &chart, &photos);
        // Relabel: swap photo positions and flip the source map.
        let swapped = vec![photos[1].clone(), photos[0].clone()];
        let source_swapped = source.map(|s| s.map(|i| 1 - i));
        let (f2, v2) = perspective_quality(&source_swapped, &chart, &swapped);
        assert!((f1 - f2).abs() < 1e-12);
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn quality_is_rotation_invariant() {
        use nalgebra::Matrix3;
        let photos = vec![
            far_photo(0, Vector3::new(0.3, 0.2, 1.0).normalize()),
            far_photo(1, Vector3::new(-0.2, -0.4, 1.0).normalize()),
        ];
        let chart = unit_wall_chart(&photos);
        let source = Grid::from_fn(16, 16, |x, y| Some((x + 2 * y) % 2));
        let (f1, v1) = perspective_quality(&source, &chart, &photos);

        // Rotate the whole scene rigidly.
        let angle = 0.7f64;
        let rot = Matrix3::new(
            angle.cos(),
            -angle.sin(),
            0.0,
            angle.sin(),
            angle.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let rot = rot
            * Matrix3::new(
                1.0,
                0.0,
                0.0,
                0.0,
                angle.cos(),
                -angle.sin(),
                0.0,
                angle.sin(),
                angle.cos(),
            );
        let poly2 = ProxyPolygon::from_vertices(
            0,
            vec![
                rot * Vector3::new(-0.5, -0.5, 0.0),
                rot * Vector3::new(0.5, -0.5, 0.0),
                rot * Vector3::new(0.5, 0.5, 0.0),
                rot * Vector3::new(-0.5, 0.5, 0.0),
            ],
        )
        .unwrap();
        let photos2: Vec<Photo> = photos
            .iter()
            .map(|p| {
                let mut q = p.clone();
                // x_cam = R_c x + t: rotating the world by rot keeps camera
                // coordinates if R_c' = R_c rot^T and center' = rot center.
                q.camera.rotation = p.camera.rotation * rot.transpose();
                q.camera.translation = -q.camera.rotation * (rot * p.camera.center());
                q
            })
            .collect();
        let chart2 = UvChart::build(&poly2, 16, &photos2).unwrap();
        let (f2, v2) = perspective_quality(&source, &chart2, &photos2);
        assert!((f1 - f2).abs() < 1e-9, "{f1} vs {f2}");
        assert!((v1 - v2).abs() < 1e-9, "{v1} vs {v2}");
    }
}
