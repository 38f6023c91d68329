//! Synthetic scene harness: controlled geometry, exact cameras, procedural
//! ground-truth textures, and rendered input photos.
//!
//! The harness shares the engine's projection and bilinear sampling code
//! paths, so a reconstruction error measured against it reflects the
//! optimization, not renderer mismatch. Standard specs ship under fixed
//! names: `quad12` (one wall, 12 views, one of them pixel-aligned
//! fronto-parallel), `box24` (six faces, 24 ring views, the bottom face
//! unseen), and `corner-biased` (two facades, a top-down-biased rig plus
//! one guidance-aligned view).

use crate::camera::{look_at_rotation, Camera};
use crate::chart::UvChart;
use crate::error::{Error, Result};
use crate::grid::{sample_color, Color, Grid};
use crate::metrics::{
    error_distances, error_percentile, percentile_nearest_rank, perspective_quality, ssim,
    MetricsReport, PolygonMetrics,
};
use crate::optimizer::PolygonResult;
use crate::scene::{Photo, ProxyModel, ProxyPolygon};
use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Quad,
    Box,
    Corner,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    /// Cameras on a cone/ring; for the quad, an arc in front of the wall
    /// with camera 0 exactly pixel-aligned fronto-parallel.
    Ring,
    /// Spiral over the upper viewing hemisphere.
    Hemisphere,
    /// Steeply inclined cluster plus one guidance-aligned view (last photo).
    BiasedTopdown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRig {
    pub kind: RigKind,
    pub count: usize,
    pub radius: f64,
    pub incline_deg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct Perturbations {
    /// Per-photo additive brightness offsets, cycled over the photo list.
    #[serde(default)]
    pub brightness: Vec<f64>,
    /// Number of photos corrupted to inverted colors (chosen by seed,
    /// never the aligned view).
    #[serde(default)]
    pub corrupted: usize,
    /// Ring azimuth sector (degrees) left without cameras.
    #[serde(default)]
    pub dropped_sector_deg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    pub geometry: Geometry,
    pub rig: CameraRig,
    #[serde(default)]
    pub perturbations: Perturbations,
    pub gt_resolution: usize,
    pub image_size: usize,
    pub seed: u64,
}

/// Specs referenced by the acceptance runs.
pub fn builtin_spec(name: &str) -> Option<SynthSpec> {
    match name {
        "quad12" => Some(SynthSpec {
            geometry: Geometry::Quad,
            rig: CameraRig {
                kind: RigKind::Ring,
                count: 12,
                radius: 4.0,
                incline_deg: 30.0,
            },
            perturbations: Perturbations {
                brightness: vec![
                    0.0, 0.1, -0.1, 0.05, -0.05, 0.15, -0.15, 0.08, -0.08, 0.12, -0.12, 0.06,
                ],
                corrupted: 0,
                dropped_sector_deg: 0.0,
            },
            gt_resolution: 512,
            image_size: 576,
            seed: 7,
        }),
        "box24" => Some(SynthSpec {
            geometry: Geometry::Box,
            rig: CameraRig {
                kind: RigKind::Ring,
                count: 24,
                radius: 4.5,
                incline_deg: 30.0,
            },
            perturbations: Perturbations {
                brightness: vec![0.0, 0.06, -0.06, 0.1, -0.1, 0.03],
                corrupted: 0,
                dropped_sector_deg: 0.0,
            },
            gt_resolution: 256,
            image_size: 448,
            seed: 11,
        }),
        "corner-biased" => Some(SynthSpec {
            geometry: Geometry::Corner,
            rig: CameraRig {
                kind: RigKind::BiasedTopdown,
                count: 9,
                radius: 4.0,
                incline_deg: 55.0,
            },
            perturbations: Perturbations {
                brightness: vec![0.15, -0.15, 0.1, -0.1, 0.12, -0.12, 0.08, -0.08, 0.0],
                corrupted: 0,
                dropped_sector_deg: 0.0,
            },
            gt_resolution: 256,
            image_size: 512,
            seed: 23,
        }),
        _ => None,
    }
}

fn quantize_8bit(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Flat(Color),
    /// Checkerboard in texel cells.
    Checker {
        cell: usize,
        a: Color,
        b: Color,
    },
    /// Horizontal gradient with a few flat bands.
    Gradient {
        lo: f64,
        hi: f64,
        tint: Color,
    },
    /// Checker with a flat band across the middle third.
    CheckerWithBand {
        cell: usize,
        a: Color,
        b: Color,
        band: Color,
    },
}

fn gt_texture(pattern: Pattern, w: usize, h: usize) -> Grid<Color> {
    Grid::from_fn(w, h, |x, y| {
        let c = match pattern {
            Pattern::Flat(c) => c,
            Pattern::Checker { cell, a, b } => {
                if (x / cell + y / cell) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            Pattern::Gradient { lo, hi, tint } => {
                let t = lo + (hi - lo) * x as f64 / (w - 1).max(1) as f64;
                [t * tint[0], t * tint[1], t * tint[2]]
            }
            Pattern::CheckerWithBand { cell, a, b, band } => {
                if y >= h / 3 && y < 2 * h / 3 {
                    band
                } else if (x / cell + y / cell) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
        };
        [quantize_8bit(c[0]), quantize_8bit(c[1]), quantize_8bit(c[2])]
    })
}

fn quad_model() -> ProxyModel {
    ProxyModel {
        polygons: vec![ProxyPolygon::from_vertices(
            0,
            vec![
                Vector3::new(-1.0, -0.75, 0.0),
                Vector3::new(1.0, -0.75, 0.0),
                Vector3::new(1.0, 0.75, 0.0),
                Vector3::new(-1.0, 0.75, 0.0),
            ],
        )
        .expect("quad")],
    }
}

fn box_model() -> ProxyModel {
    let (hx, hy, hz) = (1.0, 0.75, 0.5);
    let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
    let faces: Vec<Vec<Vector3<f64>>> = vec![
        // +x
        vec![v(hx, -hy, -hz), v(hx, hy, -hz), v(hx, hy, hz), v(hx, -hy, hz)],
        // -x
        vec![v(-hx, hy, -hz), v(-hx, -hy, -hz), v(-hx, -hy, hz), v(-hx, hy, hz)],
        // +y
        vec![v(hx, hy, -hz), v(-hx, hy, -hz), v(-hx, hy, hz), v(hx, hy, hz)],
        // -y
        vec![v(-hx, -hy, -hz), v(hx, -hy, -hz), v(hx, -hy, hz), v(-hx, -hy, hz)],
        // +z (top)
        vec![v(-hx, -hy, hz), v(hx, -hy, hz), v(hx, hy, hz), v(-hx, hy, hz)],
        // -z (bottom)
        vec![v(-hx, hy, -hz), v(hx, hy, -hz), v(hx, -hy, -hz), v(-hx, -hy, -hz)],
    ];
    ProxyModel {
        polygons: faces
            .into_iter()
            .enumerate()
            .map(|(i, f)| ProxyPolygon::from_vertices(i, f).expect("box face"))
            .collect(),
    }
}

fn corner_model() -> ProxyModel {
    // Wall A in the x=0 plane facing +x; wall B in the y=0 plane facing +y.
    let a = ProxyPolygon::from_vertices(
        0,
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 2.0, 1.5),
            Vector3::new(0.0, 0.0, 1.5),
        ],
    )
    .expect("wall A");
    let b = ProxyPolygon::from_vertices(
        1,
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 1.5),
            Vector3::new(2.0, 0.0, 1.5),
            Vector3::new(2.0, 0.0, 0.0),
        ],
    )
    .expect("wall B");
    ProxyModel {
        polygons: vec![a, b],
    }
}

fn gt_patterns(geometry: Geometry) -> Vec<Pattern> {
    let dark = [0.15, 0.17, 0.2];
    let light = [0.85, 0.82, 0.78];
    match geometry {
        Geometry::Quad => vec![Pattern::CheckerWithBand {
            cell: 24,
            a: light,
            b: [0.3, 0.45, 0.6],
            band: [0.55, 0.5, 0.45],
        }],
        Geometry::Box => vec![
            Pattern::Flat([0.55, 0.5, 0.45]),
            Pattern::Checker {
                cell: 16,
                a: light,
                b: dark,
            },
            Pattern::Gradient {
                lo: 0.2,
                hi: 0.85,
                tint: [1.0, 0.9, 0.75],
            },
            Pattern::CheckerWithBand {
                cell: 12,
                a: [0.75, 0.7, 0.62],
                b: [0.32, 0.36, 0.42],
                band: [0.6, 0.55, 0.5],
            },
            Pattern::Checker {
                cell: 8,
                a: [0.8, 0.78, 0.72],
                b: [0.25, 0.28, 0.33],
            },
            Pattern::Flat([0.4, 0.4, 0.4]),
        ],
        Geometry::Corner => vec![
            Pattern::CheckerWithBand {
                cell: 8,
                a: [0.9, 0.88, 0.84],
                b: [0.12, 0.14, 0.18],
                band: [0.62, 0.58, 0.52],
            },
            Pattern::CheckerWithBand {
                cell: 8,
                a: [0.25, 0.3, 0.5],
                b: [0.82, 0.8, 0.74],
                band: [0.45, 0.42, 0.4],
            },
        ],
    }
}

/// Build the ground-truth charts (at `gt_resolution`) and textures.
pub fn ground_truth(spec: &SynthSpec) -> Result<(ProxyModel, Vec<UvChart>, Vec<Grid<Color>>)> {
    let model = match spec.geometry {
        Geometry::Quad => quad_model(),
        Geometry::Box => box_model(),
        Geometry::Corner => corner_model(),
    };
    let patterns = gt_patterns(spec.geometry);
    let mut charts = Vec::new();
    let mut textures = Vec::new();
    for (poly, pattern) in model.polygons.iter().zip(patterns) {
        let chart = UvChart::build(poly, spec.gt_resolution, &[])?;
        textures.push(gt_texture(pattern, chart.width, chart.height));
        charts.push(chart);
    }
    Ok((model, charts, textures))
}

/// Margin (pixels) around the pixel-aligned fronto-parallel camera's view.
pub const ALIGNED_MARGIN: usize = 8;

/// A camera whose pixel grid aligns exactly with the chart's texel grid:
/// texel `(ix, iy)` lands on pixel `(ix + margin, H - 1 - iy + margin)`.
pub fn aligned_camera(chart: &UvChart, distance: f64) -> Camera {
    let poly = &chart.polygon;
    let ts = chart.texel_size;
    let rotation = Matrix3::from_rows(&[
        poly.e1.transpose(),
        (-poly.e2).transpose(),
        (-poly.normal).transpose(),
    ]);
    let center = chart.center_point() + poly.normal * distance;
    Camera {
        width: chart.width + 2 * ALIGNED_MARGIN,
        height: chart.height + 2 * ALIGNED_MARGIN,
        fx: distance / ts,
        fy: distance / ts,
        cx: chart.width as f64 / 2.0 + ALIGNED_MARGIN as f64 - 0.5,
        cy: chart.height as f64 / 2.0 + ALIGNED_MARGIN as f64 - 0.5,
        rotation,
        translation: {
            let r = Matrix3::from_rows(&[
                poly.e1.transpose(),
                (-poly.e2).transpose(),
                (-poly.normal).transpose(),
            ]);
            -r * center
        },
    }
}

fn standard_camera(center: Vector3<f64>, target: Vector3<f64>, size: usize, focal: f64) -> Camera {
    let rotation = look_at_rotation(&center, &target, &Vector3::z());
    Camera {
        width: size,
        height: size,
        fx: focal,
        fy: focal,
        cx: (size - 1) as f64 / 2.0,
        cy: (size - 1) as f64 / 2.0,
        rotation,
        translation: -rotation * center,
    }
}

fn build_cameras(
    spec: &SynthSpec,
    model: &ProxyModel,
    charts: &[UvChart],
) -> Result<Vec<Camera>> {
    let diag = model.diameter();
    let focal = spec.image_size as f64 * spec.rig.radius / (1.3 * diag);
    let mut cameras = Vec::new();
    match (spec.geometry, spec.rig.kind) {
        (Geometry::Quad, RigKind::Ring) => {
            // Camera 0: exact fronto-parallel alignment. The rest sit on a
            // cone of the given incline around the wall normal.
            cameras.push(aligned_camera(&charts[0], spec.rig.radius));
            let center = charts[0].center_point();
            let n = spec.rig.count - 1;
            let incline = spec.rig.incline_deg.to_radians();
            for i in 0..n {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                if spec.perturbations.dropped_sector_deg > 0.0
                    && phi.to_degrees() < spec.perturbations.dropped_sector_deg
                {
                    continue;
                }
                let dir = Vector3::new(
                    incline.sin() * phi.cos(),
                    incline.sin() * phi.sin(),
                    incline.cos(),
                );
                cameras.push(standard_camera(
                    center + dir * spec.rig.radius,
                    center,
                    spec.image_size,
                    focal,
                ));
            }
        }
        (Geometry::Box, RigKind::Ring) => {
            let elevation = spec.rig.incline_deg.to_radians();
            for i in 0..spec.rig.count {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / spec.rig.count as f64;
                if spec.perturbations.dropped_sector_deg > 0.0
                    && phi.to_degrees() < spec.perturbations.dropped_sector_deg
                {
                    continue;
                }
                let dir = Vector3::new(
                    elevation.cos() * phi.cos(),
                    elevation.cos() * phi.sin(),
                    elevation.sin(),
                );
                cameras.push(standard_camera(
                    dir * spec.rig.radius,
                    Vector3::zeros(),
                    spec.image_size,
                    focal,
                ));
            }
        }
        (_, RigKind::Hemisphere) => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            for i in 0..spec.rig.count {
                let t = (i as f64 + 0.5) / spec.rig.count as f64;
                let elevation = (0.25 + 0.6 * t) * std::f64::consts::FRAC_PI_2;
                let phi = golden * i as f64;
                let dir = Vector3::new(
                    elevation.cos() * phi.cos(),
                    elevation.cos() * phi.sin(),
                    elevation.sin(),
                );
                cameras.push(standard_camera(
                    dir * spec.rig.radius,
                    Vector3::zeros(),
                    spec.image_size,
                    focal,
                ));
            }
        }
        (Geometry::Corner, RigKind::BiasedTopdown) => {
            // Steep top-down cluster over the corner's open octant, then one
            // view aligned with wall A's guidance direction (appended last).
            let n = spec.rig.count - 1;
            let elevation = spec.rig.incline_deg.to_radians();
            let look = Vector3::new(0.7, 0.7, 0.6);
            let mut oblique_centers = Vec::new();
            for i in 0..n {
                let t = i as f64 / (n - 1).max(1) as f64;
                let phi = (20.0 + 50.0 * t).to_radians();
                let dir = Vector3::new(
                    elevation.cos() * phi.cos(),
                    elevation.cos() * phi.sin(),
                    elevation.sin(),
                );
                let center = look + dir * spec.rig.radius;
                oblique_centers.push(center);
                cameras.push(standard_camera(center, look, spec.image_size, focal));
            }
            // Guidance of wall A from the oblique rig: mean direction at the
            // chart center blended with the facade normal.
            let anchor = charts[0].center_point();
            let mut sum = Vector3::zeros();
            for c in &oblique_centers {
                sum += (c - anchor).normalize();
            }
            let guide = (sum.normalize() * 0.5 + model.polygons[0].normal * 0.5).normalize();
            cameras.push(standard_camera(
                anchor + guide * spec.rig.radius,
                anchor,
                spec.image_size,
                focal,
            ));
        }
        (g, k) => {
            return Err(Error::InvalidSpec(format!(
                "unsupported geometry/rig combination {g:?}/{k:?}"
            )));
        }
    }

    for (i, cam) in cameras.iter().enumerate() {
        let c = cam.center();
        let inside = model.polygons.iter().all(|p| p.normal.dot(&(c - p.origin)) < 0.0);
        if inside && model.polygons.len() > 2 {
            return Err(Error::CameraInsideGeometry(format!("camera {i}")));
        }
    }
    Ok(cameras)
}

/// Background color of pixels that hit no polygon.
pub const BACKGROUND: Color = [0.35, 0.36, 0.38];

/// Ray-cast render of the ground-truth textured proxy into one camera,
/// using the engine's plane frames and bilinear chart sampling.
pub fn render_view(
    model: &ProxyModel,
    charts: &[UvChart],
    textures: &[Grid<Color>],
    camera: &Camera,
) -> Grid<Color> {
    let center = camera.center();
    Grid::from_fn(camera.width, camera.height, |px, py| {
        let dir = camera.ray_direction(px as f64, py as f64);
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (pi, poly) in model.polygons.iter().enumerate() {
            if poly.normal.dot(&(center - poly.origin)) <= 0.0 {
                continue;
            }
            let denom = poly.normal.dot(&dir);
            if denom.abs() < 1e-15 {
                continue;
            }
            let s = poly.normal.dot(&(poly.origin - center)) / denom;
            if s <= 1e-12 {
                continue;
            }
            if best.map(|(bs, _, _, _)| s >= bs).unwrap_or(false) {
                continue;
            }
            let hit = center + dir * s;
            let (u, v) = poly.plane_coords(&hit);
            if poly.contains(u, v) {
                best = Some((s, pi, u, v));
            }
        }
        match best {
            Some((_, pi, u, v)) => {
                let (cx, cy) = charts[pi].plane_to_chart(u, v);
                sample_color(&textures[pi], cx, cy)
            }
            None => BACKGROUND,
        }
    })
}

/// Generate the full synthetic scene: proxy model, photos (rendered, then
/// perturbed), ground-truth charts and textures. Deterministic under the
/// spec's seed.
#[allow(clippy::type_complexity)]
pub fn generate_synthetic_scene(
    spec: &SynthSpec,
) -> Result<(ProxyModel, Vec<Photo>, Vec<UvChart>, Vec<Grid<Color>>)> {
    if spec.rig.count == 0 {
        return Err(Error::InvalidSpec("camera count must be >= 1".into()));
    }
    let (model, charts, textures) = ground_truth(spec)?;
    let cameras = build_cameras(spec, &model, &charts)?;

    let mut photos: Vec<Photo> = cameras
        .par_iter()
        .enumerate()
        .map(|(i, cam)| Photo {
            id: i,
            name: format!("photo_{i:03}.png"),
            camera: cam.clone(),
            rgb: render_view(&model, &charts, &textures, cam),
        })
        .collect();

    // Perturbations: brightness offsets cycle over the list; corruption
    // picks seeded distinct photos, sparing the aligned/guidance view
    // (photo 0 for quad rigs, the last photo for the biased rig).
    if !spec.perturbations.brightness.is_empty() {
        for photo in photos.iter_mut() {
            let offset = spec.perturbations.brightness
                [photo.id % spec.perturbations.brightness.len()];
            if offset != 0.0 {
                for c in photo.rgb.data_mut() {
                    for ch in 0..3 {
                        c[ch] = (c[ch] + offset).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    if spec.perturbations.corrupted > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let protected: usize = match (spec.geometry, spec.rig.kind) {
            (Geometry::Quad, RigKind::Ring) => 0,
            (_, RigKind::BiasedTopdown) => photos.len() - 1,
            _ => usize::MAX,
        };
        let mut pool: Vec<usize> = (0..photos.len()).filter(|&i| i != protected).collect();
        pool.shuffle(&mut rng);
        for &i in pool.iter().take(spec.perturbations.corrupted) {
            for c in photos[i].rgb.data_mut() {
                for ch in 0..3 {
                    c[ch] = 1.0 - c[ch];
                }
            }
        }
    }

    // The sampled-back photos must round-trip PNG exactly in tests, so
    // quantize them to the 8-bit lattice here.
    for photo in photos.iter_mut() {
        for c in photo.rgb.data_mut() {
            for ch in 0..3 {
                c[ch] = quantize_8bit(c[ch]);
            }
        }
    }

    // Rebuild the ground-truth charts with the photos so they carry the
    // per-photo homographies (the geometry is unchanged).
    let charts = model
        .polygons
        .iter()
        .map(|p| UvChart::build(p, spec.gt_resolution, &photos))
        .collect::<Result<Vec<_>>>()?;

    Ok((model, photos, charts, textures))
}

/// Compare optimized polygons against the ground truth.
pub fn evaluate_against_gt(
    results: &[PolygonResult],
    gt_textures: &[Grid<Color>],
    photos: &[Photo],
) -> Result<MetricsReport> {
    if results.len() != gt_textures.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} reconstructions vs {} ground-truth textures",
            results.len(),
            gt_textures.len()
        )));
    }
    let mut per_polygon = Vec::new();
    let mut all_distances: Vec<f64> = Vec::new();
    let mut ssim_acc = 0.0;
    let mut q_front_acc = 0.0;
    let mut q_vc_acc = 0.0;
    let mut scored = 0usize;
    for (result, gt) in results.iter().zip(gt_textures) {
        let holes = &result.texture.hole;
        let hole_fraction = result.texture.hole_fraction();
        if hole_fraction >= 1.0 {
            per_polygon.push(PolygonMetrics {
                polygon: result.polygon,
                error_p90: f64::NAN,
                error_p95: f64::NAN,
                ssim: f64::NAN,
                q_front: 0.0,
                q_vc: 0.0,
                hole_fraction,
            });
            continue;
        }
        let p90 = error_percentile(&result.texture.rgb, gt, Some(holes), 90.0)?;
        let p95 = error_percentile(&result.texture.rgb, gt, Some(holes), 95.0)?;
        let s = ssim(&result.texture.rgb, gt)?;
        let (q_front, q_vc) = perspective_quality(&result.source, &result.chart, photos);
        all_distances.extend(error_distances(&result.texture.rgb, gt, Some(holes))?);
        ssim_acc += s;
        q_front_acc += q_front;
        q_vc_acc += q_vc;
        scored += 1;
        per_polygon.push(PolygonMetrics {
            polygon: result.polygon,
            error_p90: p90,
            error_p95: p95,
            ssim: s,
            q_front,
            q_vc,
            hole_fraction,
        });
    }
    let aggregate_error_p90 = percentile_nearest_rank(&mut all_distances.clone(), 90.0);
    let aggregate_error_p95 = percentile_nearest_rank(&mut all_distances, 95.0);
    let denom = scored.max(1) as f64;
    Ok(MetricsReport {
        per_polygon,
        aggregate_error_p90,
        aggregate_error_p95,
        mean_ssim: ssim_acc / denom,
        mean_q_front: q_front_acc / denom,
        mean_q_vc: q_vc_acc / denom,
        approximate_perspective_metrics: true,
    })
}
