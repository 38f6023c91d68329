//! The per-polygon optimization loop: compose, render, loss, Adam step,
//! mask update, progressive data elimination, coarse-to-fine doubling.
//!
//! Determinism: all per-polygon math is sequential with fixed iteration
//! order; parallelism lives one level up (one worker per polygon), so
//! results are independent of the thread count.

use crate::chart::{guidance_direction, UvChart};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::losses::{
    loss_context, quality_context, stage_context, total_loss_and_grad, LossParams, StageContext,
};
use crate::scene::{Photo, ProxyModel, SceneConfig};
use crate::texture_field::{
    build_sample_cache, compose_with_sums, init_weights, resample_bilinear, source_map,
    SampleCache, TextureMap, WeightField,
};
use crate::visibility::{
    build_pixel_texel_maps, build_polygon_masks, pullback_image_mask, recompute_overlap,
    update_activation, DepthMap, MaskSet,
};
use serde::{Deserialize, Serialize};

pub const ADAM_EPS: f64 = 1e-8;

/// Pixel-level elimination keeps a floor under the 3-sigma rule so exact
/// consensus (sigma = 0) never mass-eliminates.
pub const ELIMINATION_DISTANCE_FLOOR: f64 = 0.05;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.99,
        }
    }
}

/// One Adam update with bias correction, then clamp to `[0,1]` and zero
/// outside the activation masks.
pub fn adam_step(
    weights: &mut WeightField,
    masks: &MaskSet,
    grad: &[Grid<f64>],
    params: &AdamParams,
) {
    weights.step += 1;
    let t = weights.step as i32;
    let bc1 = 1.0 - params.beta1.powi(t);
    let bc2 = 1.0 - params.beta2.powi(t);
    for k in 0..weights.theta.len() {
        let active = masks.active[k];
        let mask = masks.a_hat[k].data();
        let g = grad[k].data();
        let m1 = weights.m1[k].data_mut();
        let m2 = weights.m2[k].data_mut();
        let theta = weights.theta[k].data_mut();
        for i in 0..theta.len() {
            m1[i] = params.beta1 * m1[i] + (1.0 - params.beta1) * g[i];
            m2[i] = params.beta2 * m2[i] + (1.0 - params.beta2) * g[i] * g[i];
            let m_hat = m1[i] / bc1;
            let v_hat = m2[i] / bc2;
            theta[i] -= params.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            theta[i] = theta[i].clamp(0.0, 1.0);
            if !active || !mask[i] {
                theta[i] = 0.0;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EliminationEvent {
    pub photo: usize,
    pub reason: String,
    pub stage_resolution: usize,
    pub iteration: usize,
}

/// Progressive data elimination.
///
/// Photo level: a photo is dropped for this polygon when the fraction of
/// zero-weight texels over its stage-initial geometric mask exceeds `tau_w`,
/// unless the drop would leave some texel with no active photo (eliminated
/// photos never re-enter).
///
/// Pixel level: per texel, contributions whose sampled color deviates from
/// the active mean by more than `max(3 sigma, 0.05)` are deactivated, unless
/// that would leave the texel empty.
#[allow(clippy::too_many_arguments)]
pub fn eliminate_data(
    weights: &mut WeightField,
    masks: &mut MaskSet,
    cache: &SampleCache,
    pixel_maps: &[Grid<u32>],
    photos: &[Photo],
    tau_w: f64,
    stage_resolution: usize,
    iteration: usize,
    log: &mut Vec<EliminationEvent>,
) {
    let n = masks.candidates.len();
    if n == 0 {
        return;
    }
    let (w, h) = (masks.a_hat[0].width(), masks.a_hat[0].height());

    // Photo-level tau_w rule.
    for k in 0..n {
        if !masks.active[k] {
            continue;
        }
        let visible = masks.a_hat_geom[k].count_ones();
        if visible == 0 {
            continue;
        }
        let mut nonzero = 0usize;
        for (i, &b) in masks.a_hat[k].data().iter().enumerate() {
            if b && weights.theta[k].data()[i] > 0.0 {
                nonzero += 1;
            }
        }
        let zero_fraction = 1.0 - nonzero as f64 / visible as f64;
        if zero_fraction <= tau_w {
            continue;
        }
        // The drop must not orphan any texel.
        let mut orphanes = false;
        'scan: for y in 0..h {
            for x in 0..w {
                if *masks.a_hat[k].get(x, y) && masks.active_count_at(x, y) == 1 {
                    orphanes = true;
                    break 'scan;
                }
            }
        }
        if orphanes {
            continue;
        }
        masks.active[k] = false;
        masks.a_hat[k].fill(false);
        masks.a[k].fill(false);
        weights.theta[k].fill(0.0);
        weights.m1[k].fill(0.0);
        weights.m2[k].fill(0.0);
        log.push(EliminationEvent {
            photo: photos[masks.candidates[k]].id,
            reason: format!("zero-weight fraction {zero_fraction:.3} > tau_w {tau_w}"),
            stage_resolution,
            iteration,
        });
    }

    // Pixel-level 3-sigma rule.
    let mut pixel_eliminations = vec![0usize; n];
    for y in 0..h {
        for x in 0..w {
            let mut members: Vec<(usize, [f64; 3])> = Vec::new();
            for k in 0..n {
                if masks.active[k] && *masks.a_hat[k].get(x, y) {
                    if let Some(c) = cache.get(k, x, y) {
                        members.push((k, c));
                    }
                }
            }
            if members.len() < 2 {
                continue;
            }
            let inv = 1.0 / members.len() as f64;
            let mut mean = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            for (_, c) in &members {
                for ch in 0..3 {
                    mean[ch] += c[ch];
                    sq[ch] += c[ch] * c[ch];
                }
            }
            let mut var = 0.0;
            for ch in 0..3 {
                mean[ch] *= inv;
                var += (sq[ch] * inv - mean[ch] * mean[ch]).max(0.0);
            }
            let sigma = (var / 3.0).sqrt();
            let threshold = (3.0 * sigma).max(ELIMINATION_DISTANCE_FLOOR);
            let outliers: Vec<usize> = members
                .iter()
                .filter(|(_, c)| {
                    let d = ((c[0] - mean[0]).powi(2)
                        + (c[1] - mean[1]).powi(2)
                        + (c[2] - mean[2]).powi(2))
                    .sqrt();
                    d > threshold
                })
                .map(|(k, _)| *k)
                .collect();
            if outliers.is_empty() || outliers.len() == members.len() {
                continue;
            }
            for k in outliers {
                masks.a_hat[k].set(x, y, false);
                weights.theta[k].set(x, y, 0.0);
                pixel_eliminations[k] += 1;
            }
        }
    }

    for k in 0..n {
        pullback_image_mask(masks, &pixel_maps[k], k);
    }
    recompute_overlap(masks);
    let _ = pixel_eliminations;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub resolution: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_render: f64,
    pub final_perspective: f64,
    pub final_parameter: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonReport {
    pub polygon: usize,
    pub stages: Vec<StageReport>,
    pub eliminated: Vec<EliminationEvent>,
    pub hole_fraction: f64,
    /// Dominant-source photo id per texel, flattened row-major; -1 = hole.
    /// Exported as an image by the pipeline; summarized here.
    pub source_histogram: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
    pub mask_update_order: String,
}

/// Everything the pipeline needs from one optimized polygon.
#[derive(Clone, Debug)]
pub struct PolygonResult {
    pub polygon: usize,
    pub chart: UvChart,
    pub texture: TextureMap,
    pub weights: WeightField,
    pub masks: MaskSet,
    pub source: Grid<Option<usize>>,
    pub report: PolygonReport,
}

#[derive(Clone, Debug)]
pub struct OptimizeConfig {
    pub stages: Vec<usize>,
    pub loss: LossParams,
    pub adam: AdamParams,
    pub tau: f64,
    pub tau_w: f64,
    pub max_iterations: usize,
    pub convergence_window: usize,
    pub convergence_rel: f64,
    pub elimination_period: usize,
}

impl OptimizeConfig {
    pub fn from_scene(config: &SceneConfig) -> Self {
        Self {
            stages: config.stage_resolutions(),
            loss: LossParams {
                alpha: config.alpha,
                beta: config.beta,
                omega: config.omega,
                lambda_s: config.lambda_s,
            },
            adam: AdamParams {
                lr: config.lr,
                beta1: config.beta1,
                beta2: config.beta2,
            },
            tau: config.tau,
            tau_w: config.tau_w,
            max_iterations: 500,
            convergence_window: 10,
            convergence_rel: 1e-3,
            elimination_period: 25,
        }
    }
}

fn converged(history: &[f64], window: usize, rel: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let tail = &history[history.len() - window - 1..];
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = tail.last().unwrap().abs().max(1e-12);
    (max - min) / scale < rel
}

fn source_histogram(source: &Grid<Option<usize>>, photos: &[Photo]) -> Vec<(usize, usize)> {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for (_, _, s) in source.enumerate() {
        if let Some(pos) = s {
            *counts.entry(photos[*pos].id).or_default() += 1;
        }
    }
    counts.into_iter().collect()
}

/// Optimize one polygon through every coarse-to-fine stage and compose the
/// final texture. A polygon no photo sees yields a hole-only texture and a
/// warning, not an error.
pub fn optimize_polygon(
    polygon_index: usize,
    model: &ProxyModel,
    photos: &[Photo],
    depth_maps: &[DepthMap],
    eps_z: f64,
    config: &OptimizeConfig,
) -> Result<PolygonResult> {
    let polygon = &model.polygons[polygon_index];
    let mut warnings = Vec::new();
    let mut eliminated_log = Vec::new();

    let mut chart = UvChart::build(polygon, config.stages[0], photos)?;
    let mut masks = build_polygon_masks(polygon_index, &chart, photos, depth_maps, eps_z, None);

    if masks.candidates.is_empty() {
        // Hole-only result at target resolution.
        let final_chart = UvChart::build(polygon, *config.stages.last().unwrap(), photos)?;
        let (w, h) = (final_chart.width, final_chart.height);
        let texture = TextureMap {
            rgb: Grid::new(w, h, [0.0; 3]),
            hole: Grid::new(w, h, true),
        };
        warnings.push("no photo sees this polygon; texture is hole-only".to_string());
        let report = PolygonReport {
            polygon: polygon_index,
            stages: Vec::new(),
            eliminated: Vec::new(),
            hole_fraction: 1.0,
            source_histogram: Vec::new(),
            warnings,
            mask_update_order: "activation-update, then elimination".to_string(),
        };
        return Ok(PolygonResult {
            polygon: polygon_index,
            chart: final_chart,
            texture,
            weights: WeightField::zeros(0, w, h),
            masks,
            source: Grid::new(w, h, None),
            report,
        });
    }

    // Guidance direction from the initially visible photos; fixed for the
    // whole polygon run.
    let visible: Vec<&Photo> = masks.candidates.iter().map(|&i| &photos[i]).collect();
    let guidance = guidance_direction(polygon, &visible);

    // Stage-static caches: sampled photo colors per texel, frontality and
    // guidance residual grids, and the pixel-to-texel pullback maps.
    let mut cache = build_sample_cache(&chart, photos, &masks);
    let mut pixel_maps = build_pixel_texel_maps(&chart, &masks);
    let mut stage = stage_context(&chart, photos, &masks, guidance);

    let quality = quality_context(&masks, &cache, &stage.q_angle);
    let mut weights = init_weights(&masks, &quality.q);

    let mut stage_reports = Vec::new();
    for (si, &resolution) in config.stages.iter().enumerate() {
        if si > 0 {
            // Upscale: rebuild chart and geometric masks at 2x, carry the
            // weights over by global photo id, keep eliminated photos out.
            let new_chart = UvChart::build(polygon, resolution, photos)?;
            let survivors: Vec<usize> = masks
                .candidates
                .iter()
                .zip(&masks.active)
                .filter(|(_, &a)| a)
                .map(|(&id, _)| id)
                .collect();
            let mut new_masks = build_polygon_masks(
                polygon_index,
                &new_chart,
                photos,
                depth_maps,
                eps_z,
                Some(&survivors),
            );
            let mut new_weights =
                WeightField::zeros(new_masks.candidates.len(), new_chart.width, new_chart.height);
            for (nk, &global) in new_masks.candidates.iter().enumerate() {
                let Some(ok) = masks.candidates.iter().position(|&g| g == global) else {
                    continue;
                };
                let mut up =
                    resample_bilinear(&weights.theta[ok], new_chart.width, new_chart.height);
                for v in up.data_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
                // New mask: geometric visibility AND positive upscaled weight.
                for y in 0..new_chart.height {
                    for x in 0..new_chart.width {
                        let keep = *new_masks.a_hat_geom[nk].get(x, y) && *up.get(x, y) > 0.0;
                        new_masks.a_hat[nk].set(x, y, keep);
                        if !keep {
                            up.set(x, y, 0.0);
                        }
                    }
                }
                new_weights.theta[nk] = up;
            }
            chart = new_chart;
            masks = new_masks;
            weights = new_weights;
            cache = build_sample_cache(&chart, photos, &masks);
            pixel_maps = build_pixel_texel_maps(&chart, &masks);
            stage = stage_context(&chart, photos, &masks, guidance);
            for nk in 0..masks.candidates.len() {
                pullback_image_mask(&mut masks, &pixel_maps[nk], nk);
            }
            recompute_overlap(&mut masks);
        }

        let mut history: Vec<f64> = Vec::new();
        let mut iterations = 0usize;
        let mut was_converged = false;
        let mut initial_loss = 0.0;
        let mut last = (0.0, 0.0, 0.0, 0.0);
        for iter in 0..config.max_iterations {
            let (texture, sums) = compose_with_sums(&weights.theta, &masks, &cache);
            let ctx = loss_context(&masks, &cache, &stage, &texture);
            let breakdown = total_loss_and_grad(
                &weights.theta,
                &chart,
                photos,
                &masks,
                &stage,
                &ctx,
                &cache,
                &texture,
                &sums,
                &config.loss,
            );
            if !breakdown.is_finite() {
                return Err(Error::NonFiniteGradient {
                    polygon: polygon_index,
                    iteration: iter as u64,
                });
            }
            if iter == 0 {
                initial_loss = breakdown.total;
            }
            last = (
                breakdown.render,
                breakdown.perspective,
                breakdown.parameter,
                breakdown.total,
            );
            adam_step(&mut weights, &masks, &breakdown.grad, &config.adam);
            update_activation(&mut masks, &pixel_maps, &mut weights.theta, config.tau);
            if (iter + 1) % config.elimination_period == 0 {
                eliminate_data(
                    &mut weights,
                    &mut masks,
                    &cache,
                    &pixel_maps,
                    photos,
                    config.tau_w,
                    resolution,
                    iter + 1,
                    &mut eliminated_log,
                );
            }
            history.push(breakdown.total);
            iterations = iter + 1;
            if converged(&history, config.convergence_window, config.convergence_rel) {
                was_converged = true;
                break;
            }
        }
        stage_reports.push(StageReport {
            resolution,
            iterations,
            converged: was_converged,
            initial_loss,
            final_loss: last.3,
            final_render: last.0,
            final_perspective: last.1,
            final_parameter: last.2,
        });
    }

    let texture = compose_with_sums(&weights.theta, &masks, &cache).0;
    let source = source_map(&weights.theta, &masks);
    let hole_fraction = texture.hole_fraction();
    if hole_fraction > 0.0 {
        warnings.push(format!(
            "{:.2}% of texels are holes (no active photo)",
            hole_fraction * 100.0
        ));
    }
    let report = PolygonReport {
        polygon: polygon_index,
        stages: stage_reports,
        eliminated: eliminated_log,
        hole_fraction,
        source_histogram: source_histogram(&source, photos),
        warnings,
        mask_update_order: "activation-update, then elimination".to_string(),
    };
    Ok(PolygonResult {
        polygon: polygon_index,
        chart,
        texture,
        weights,
        masks,
        source,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at_rotation, Camera};
    use crate::grid::Color;
    use crate::scene::ProxyPolygon;
    use crate::visibility::{depth_epsilon, render_depth_maps};
    use nalgebra::Vector3;
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

    fn photo_at(id: usize, center: Vector3<f64>, rgb: Grid<Color>) -> Photo {
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

    fn two_photo_scene(colors: [Color; 2]) -> (Vec<Photo>, UvChart, MaskSet) {
        let photos = vec![
            photo_at(0, Vector3::new(-0.2, 0.1, 1.9), Grid::new(48, 48, colors[0])),
            photo_at(1, Vector3::new(0.3, -0.1, 2.1), Grid::new(48, 48, colors[1])),
        ];
        let model = ProxyModel {
            polygons: vec![wall()],
        };
        let depth_maps = render_depth_maps(&model, &photos).unwrap();
        let chart = UvChart::build(&model.polygons[0], 16, &photos).unwrap();
        let masks =
            build_polygon_masks(0, &chart, &photos, &depth_maps, depth_epsilon(&model), None);
        (photos, chart, masks)
    }

    #[test]
    fn adam_matches_scalar_oracle() {
        let (_, chart, masks) = two_photo_scene([[0.5; 3], [0.5; 3]]);
        let (w, h) = (chart.width, chart.height);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut weights = WeightField::zeros(2, w, h);
        for k in 0..2 {
            weights.theta[k] = Grid::from_fn(w, h, |_, _| rng.random_range(0.3..0.7));
        }
        let params = AdamParams::default();

        // Scalar reference state.
        let mut ref_theta: Vec<Vec<f64>> = weights.theta.iter().map(|g| g.data().to_vec()).collect();
        let mut ref_m: Vec<Vec<f64>> = vec![vec![0.0; w * h]; 2];
        let mut ref_v: Vec<Vec<f64>> = vec![vec![0.0; w * h]; 2];

        for step in 1..=5 {
            let grads: Vec<Grid<f64>> = (0..2)
                .map(|_| Grid::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            adam_step(&mut weights, &masks, &grads, &params);
            for k in 0..2 {
                for i in 0..w * h {
                    let g = grads[k].data()[i];
                    ref_m[k][i] = params.beta1 * ref_m[k][i] + (1.0 - params.beta1) * g;
                    ref_v[k][i] = params.beta2 * ref_v[k][i] + (1.0 - params.beta2) * g * g;
                    let m_hat = ref_m[k][i] / (1.0 - params.beta1.powi(step));
                    let v_hat = ref_v[k][i] / (1.0 - params.beta2.powi(step));
                    ref_theta[k][i] -= params.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    ref_theta[k][i] = ref_theta[k][i].clamp(0.0, 1.0);
                    if !masks.a_hat[k].data()[i] {
                        ref_theta[k][i] = 0.0;
                    }
                    assert!(
                        (weights.theta[k].data()[i] - ref_theta[k][i]).abs() < 1e-12,
                        "step {step} k {k} i {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_weights() {
        let (_, chart, masks) = two_photo_scene([[0.5; 3], [0.5; 3]]);
        let mut weights = WeightField::zeros(2, chart.width, chart.height);
        for k in 0..2 {
            weights.theta[k] = masks.a_hat[k].map(|&b| if b { 0.42 } else { 0.0 });
        }
        let before = weights.theta.clone();
        let grads = vec![Grid::new(chart.width, chart.height, 0.0); 2];
        adam_step(&mut weights, &masks, &grads, &AdamParams::default());
        assert_eq!(weights.theta, before);
    }

    #[test]
    fn adam_clamps_at_zero() {
        let (_, chart, masks) = two_photo_scene([[0.5; 3], [0.5; 3]]);
        let mut weights = WeightField::zeros(2, chart.width, chart.height);
        for k in 0..2 {
            weights.theta[k] = masks.a_hat[k].map(|&b| if b { 0.0005 } else { 0.0 });
        }
        let grads = vec![Grid::new(chart.width, chart.height, 1.0); 2];
        adam_step(&mut weights, &masks, &grads, &AdamParams::default());
        for k in 0..2 {
            for &v in weights.theta[k].data() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn photo_with_zero_weights_is_dropped() {
        let (photos, chart, mut masks) = two_photo_scene([[0.5; 3], [0.5; 3]]);
        let mut weights = WeightField::zeros(2, chart.width, chart.height);
        weights.theta[0] = masks.a_hat[0].map(|&b| if b { 0.8 } else { 0.0 });
        // Photo 1 has all-zero weights under its mask.
        let mut log = Vec::new();
        eliminate_data(&mut weights, &mut masks, &chart, &photos, 0.95, 16, 25, &mut log);
        assert!(!masks.active[1]);
        assert!(masks.active[0]);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].photo, 1);
        assert!(log[0].reason.contains("tau_w"));
    }

    #[test]
    fn consensus_photos_are_not_eliminated() {
        let (photos, chart, mut masks) = two_photo_scene([[0.4; 3], [0.4; 3]]);
        let mut weights = WeightField::zeros(2, chart.width, chart.height);
        for k in 0..2 {
            weights.theta[k] = masks.a_hat[k].map(|&b| if b { 0.5 } else { 0.0 });
        }
        let before: Vec<Grid<bool>> = masks.a_hat.clone();
        let mut log = Vec::new();
        eliminate_data(&mut weights, &mut masks, &chart, &photos, 0.95, 16, 25, &mut log);
        assert!(log.is_empty());
        assert_eq!(masks.a_hat, before);
    }

    #[test]
    fn last_photo_is_never_dropped() {
        let (photos, chart, mut masks) = two_photo_scene([[0.5; 3], [0.5; 3]]);
        let mut weights = WeightField::zeros(2, chart.width, chart.height);
        // Both photos all-zero: dropping either would orphan texels
        // wherever it is the sole cover; dropping both would orphan all.
        let mut log = Vec::new();
        eliminate_data(&mut weights, &mut masks, &chart, &photos, 0.95, 16, 25, &mut log);
        // Photo 0 can be dropped (photo 1 still covers), photo 1 cannot.
        let active_count = masks.active.iter().filter(|&&a| a).count();
        assert!(active_count >= 1, "at least one photo must remain");
        for y in 0..chart.height {
            for x in 0..chart.width {
                if *chart.inside_mask.get(x, y) {
                    let covered = (0..2).any(|k| masks.active[k] && *masks.a_hat[k].get(x, y));
                    let was_covered = (0..2).any(|k| *masks.a_hat_geom[k].get(x, y));
                    assert!(!was_covered || covered, "texel ({x},{y}) orphaned");
                }
            }
        }
    }

    #[test]
    fn outlier_pixels_are_eliminated_with_three_plus_photos() {
        // Five agreeing photos and one inverted: the Euclidean distance of
        // the outlier exceeds the pooled 3-sigma bound for N >= 5.
        let base = [0.2, 0.6, 0.3];
        let inverted = [0.8, 0.4, 0.7];
        let mut photos: Vec<Photo> = (0..5)
            .map(|i| {
                let a = i as f64 * 0.5 - 1.0;
                photo_at(
                    i,
                    Vector3::new(0.4 * a.cos(), 0.3 * a.sin(), 2.0),
                    Grid::new(48, 48, base),
                )
            })
            .collect();
        photos.push(photo_at(
            5,
            Vector3::new(0.1, 0.2, 2.2),
            Grid::new(48, 48, inverted),
        ));
        let model = ProxyModel {
            polygons: vec![wall()],
        };
        let depth_maps = render_depth_maps(&model, &photos).unwrap();
        let chart = UvChart::build(&model.polygons[0], 16, &photos).unwrap();
        let mut masks =
            build_polygon_masks(0, &chart, &photos, &depth_maps, depth_epsilon(&model), None);
        assert_eq!(masks.candidates.len(), 6);
        let mut weights = WeightField::zeros(6, chart.width, chart.height);
        for k in 0..6 {
            weights.theta[k] = masks.a_hat[k].map(|&b| if b { 0.5 } else { 0.0 });
        }
        let outlier_before = masks.a_hat[5].count_ones();
        let mut log = Vec::new();
        eliminate_data(&mut weights, &mut masks, &chart, &photos, 0.95, 16, 25, &mut log);
        let outlier_after = masks.a_hat[5].count_ones();
        assert!(
            (outlier_after as f64) < 0.1 * outlier_before as f64,
            "outlier kept {outlier_after}/{outlier_before} texels"
        );
        // Consensus photos keep their masks.
        for k in 0..5 {
            assert_eq!(masks.a_hat[k].count_ones(), masks.a_hat_geom[k].count_ones());
        }
    }

    #[test]
    fn convergence_window_detects_plateau() {
        let mut history: Vec<f64> = (0..30).map(|i| 100.0 - i as f64).collect();
        assert!(!converged(&history, 10, 1e-3));
        history.extend(std::iter::repeat(70.0).take(11));
        assert!(converged(&history, 10, 1e-3));
    }
}
