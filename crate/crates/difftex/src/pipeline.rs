//! End-to-end orchestration: preprocess, visibility, per-polygon
//! optimization in parallel, export, and the synth/eval entry points the
//! CLI exposes.

use crate::error::{Error, Result};
use crate::grid::{Color, Grid};
use crate::metrics::{
    error_distances, error_percentile, percentile_nearest_rank, perspective_quality, ssim,
};
use crate::optimizer::{optimize_polygon, OptimizeConfig, PolygonReport, PolygonResult};
use crate::preprocess::{filter_photos, histogram_match, PhotoFilterReport};
use crate::scene::{Photo, ProxyModel, SceneConfig};
use crate::scene_io::{load_scene, load_texture_png, save_texture_png, write_outputs, write_scene};
use crate::synth::{generate_synthetic_scene, SynthSpec};
use crate::texture_field::fill_holes;
use crate::visibility::{depth_epsilon, render_depth_maps};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct Timings {
    pub load_ms: u64,
    pub preprocess_ms: u64,
    pub visibility_ms: u64,
    pub optimize_ms: u64,
    pub export_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonSummary {
    #[serde(flatten)]
    pub report: PolygonReport,
    pub q_front: f64,
    pub q_vc: f64,
    pub texture_file: String,
    pub source_map_file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: SceneConfig,
    pub filter: PhotoFilterReport,
    pub polygons: Vec<PolygonSummary>,
    pub perspective_metrics_approximate: bool,
    pub timings: Timings,
}

/// Everything a texture run produces, with the in-memory per-polygon state
/// kept for tests and evaluation.
pub struct PipelineOutput {
    pub manifest: RunManifest,
    pub results: Vec<PolygonResult>,
    pub photos: Vec<Photo>,
    pub model: ProxyModel,
}

fn make_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Run preprocess, visibility and per-polygon optimization. `threads = 0`
/// uses the rayon default; outputs are identical for any thread count.
pub fn run_texture_pipeline(config: &SceneConfig, threads: usize) -> Result<PipelineOutput> {
    config.validate()?;
    let pool = make_pool(threads)?;
    pool.install(|| {
        let mut timings = Timings::default();
        let t0 = Instant::now();
        let (model, photos) = load_scene(config)?;
        timings.load_ms = t0.elapsed().as_millis() as u64;

        let t1 = Instant::now();
        let (kept, filter_report) = filter_photos(&model, photos, config)?;
        let photos = histogram_match(kept);
        timings.preprocess_ms = t1.elapsed().as_millis() as u64;

        let t2 = Instant::now();
        let depth_maps = render_depth_maps(&model, &photos)?;
        let eps_z = depth_epsilon(&model);
        timings.visibility_ms = t2.elapsed().as_millis() as u64;

        let t3 = Instant::now();
        let opt_config = OptimizeConfig::from_scene(config);
        let results: Vec<PolygonResult> = (0..model.polygons.len())
            .into_par_iter()
            .map(|i| optimize_polygon(i, &model, &photos, &depth_maps, eps_z, &opt_config))
            .collect::<Result<Vec<_>>>()?;
        timings.optimize_ms = t3.elapsed().as_millis() as u64;

        let polygons = results
            .iter()
            .map(|r| {
                let (q_front, q_vc) = perspective_quality(&r.source, &r.chart, &photos);
                PolygonSummary {
                    report: r.report.clone(),
                    q_front,
                    q_vc,
                    texture_file: format!("textures/polygon_{:03}.png", r.polygon),
                    source_map_file: format!("source/polygon_{:03}.png", r.polygon),
                }
            })
            .collect();

        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            threads,
            config: config.clone(),
            filter: filter_report,
            polygons,
            perspective_metrics_approximate: true,
            timings,
        };
        Ok(PipelineOutput {
            manifest,
            results,
            photos,
            model,
        })
    })
}

/// Export a finished run: filled textures, textured mesh, source maps, and
/// the manifest as `report.json`.
pub fn export_run(output: &mut PipelineOutput, out_dir: &Path) -> Result<()> {
    let t = Instant::now();
    let charts: Vec<_> = output.results.iter().map(|r| r.chart.clone()).collect();
    let mut filled: Vec<_> = output.results.iter().map(|r| r.texture.clone()).collect();
    for texture in filled.iter_mut() {
        fill_holes(texture);
    }
    let source_dir = out_dir.join("source");
    fs::create_dir_all(&source_dir).map_err(|e| Error::Io {
        path: source_dir.clone(),
        source: e,
    })?;
    for result in &output.results {
        let path = source_dir.join(format!("polygon_{:03}.png", result.polygon));
        save_source_map(&path, &result.source, &output.photos)?;
    }
    output.manifest.timings.export_ms = t.elapsed().as_millis() as u64;
    write_outputs(&output.model, &charts, &filled, &output.manifest, out_dir)
}

/// Dominant-source map as an 8-bit grayscale PNG: `photo id + 1`, holes 0.
fn save_source_map(path: &Path, source: &Grid<Option<usize>>, photos: &[Photo]) -> Result<()> {
    let mut img = image::GrayImage::new(source.width() as u32, source.height() as u32);
    for (x, y, s) in source.enumerate() {
        let v = match s {
            Some(pos) => (photos[*pos].id + 1).min(255) as u8,
            None => 0u8,
        };
        // Same vertical flip as the texture PNGs.
        img.put_pixel(x as u32, (source.height() - 1 - y) as u32, image::Luma([v]));
    }
    img.save(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Generate a synthetic scene on disk: scene files, ground-truth textures,
/// a ready-to-run `scene.json`, and the resolved spec.
pub fn run_synth(spec: &SynthSpec, out_dir: &Path) -> Result<()> {
    let (model, photos, _charts, textures) = generate_synthetic_scene(spec)?;
    write_scene(out_dir, &model, &photos)?;
    let gt_dir = out_dir.join("gt");
    fs::create_dir_all(&gt_dir).map_err(|e| Error::Io {
        path: gt_dir.clone(),
        source: e,
    })?;
    for (i, texture) in textures.iter().enumerate() {
        save_texture_png(&gt_dir.join(format!("polygon_{i:03}.png")), texture)?;
    }
    let config = SceneConfig {
        proxy_path: PathBuf::from("mesh.obj"),
        camera_file: PathBuf::from("cameras.json"),
        photo_dir: PathBuf::from("photos"),
        out_dir: PathBuf::new(),
        target_resolution: spec.gt_resolution,
        ..serde_json::from_str("{\"proxy_path\":\"\",\"camera_file\":\"\",\"photo_dir\":\"\"}")
            .expect("defaults")
    };
    let scene_path = out_dir.join("scene.json");
    fs::write(
        &scene_path,
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .map_err(|e| Error::Io {
        path: scene_path,
        source: e,
    })?;
    let spec_path = out_dir.join("spec.json");
    fs::write(
        &spec_path,
        serde_json::to_string_pretty(spec).expect("spec serializes"),
    )
    .map_err(|e| Error::Io {
        path: spec_path,
        source: e,
    })?;
    Ok(())
}

/// Resolve a scene JSON: relative paths are taken against the file's parent.
pub fn load_scene_config(path: &Path) -> Result<SceneConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut config: SceneConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for p in [
        &mut config.proxy_path,
        &mut config.camera_file,
        &mut config.photo_dir,
    ] {
        if p.is_relative() {
            *p = base.join(&p);
        }
    }
    Ok(config)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalPolygon {
    pub name: String,
    pub error_p90: f64,
    pub error_p95: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_polygon: Vec<EvalPolygon>,
    pub error_p90: f64,
    pub error_p95: f64,
    pub mean_ssim: f64,
}

fn texture_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let search = if dir.join("textures").is_dir() {
        dir.join("textures")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(&search)
        .map_err(|e| Error::Io {
            path: search.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with("polygon_") && name.ends_with(".png")
        })
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingPath(search));
    }
    Ok(files)
}

/// Image-level evaluation of an exported reconstruction against a synth
/// run's ground-truth directory.
pub fn run_eval(recon_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let recon = texture_files(recon_dir)?;
    let gt = texture_files(gt_dir)?;
    if recon.len() != gt.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} reconstructed textures vs {} ground-truth textures",
            recon.len(),
            gt.len()
        )));
    }
    let mut per_polygon = Vec::new();
    let mut all: Vec<f64> = Vec::new();
    let mut ssim_acc = 0.0;
    for ((name, recon_path), (gt_name, gt_path)) in recon.iter().zip(&gt) {
        if name != gt_name {
            return Err(Error::LayoutMismatch(format!(
                "texture name mismatch: {name} vs {gt_name}"
            )));
        }
        let a: Grid<Color> = load_texture_png(recon_path)?;
        let b: Grid<Color> = load_texture_png(gt_path)?;
        let p90 = error_percentile(&a, &b, None, 90.0)?;
        let p95 = error_percentile(&a, &b, None, 95.0)?;
        let s = ssim(&a, &b)?;
        all.extend(error_distances(&a, &b, None)?);
        ssim_acc += s;
        per_polygon.push(EvalPolygon {
            name: name.clone(),
            error_p90: p90,
            error_p95: p95,
            ssim: s,
        });
    }
    let report = EvalReport {
        error_p90: percentile_nearest_rank(&mut all.clone(), 90.0),
        error_p95: percentile_nearest_rank(&mut all, 95.0),
        mean_ssim: ssim_acc / per_polygon.len() as f64,
        per_polygon,
    };
    Ok(report)
}

/// Convenience for tests and the CLI: write the eval report next to the
/// reconstruction.
pub fn write_eval_report(report: &EvalReport, recon_dir: &Path) -> Result<()> {
    let path = recon_dir.join("eval_report.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(report).expect("report serializes"),
    )
    .map_err(|e| Error::Io { path, source: e })
}

