use difftex::optimizer::{optimize_polygon, OptimizeConfig};
use difftex::preprocess::histogram_match;
use difftex::scene::SceneConfig;
use difftex::synth::{builtin_spec, evaluate_against_gt, generate_synthetic_scene};
use difftex::visibility::{depth_epsilon, render_depth_maps};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(|s| s.as_str()).unwrap_or("quad12");
    let target: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(512);
    let spec = builtin_spec(name).unwrap();
    let t0 = Instant::now();
    let (model, photos, _charts, gt) = generate_synthetic_scene(&spec).unwrap();
    println!("generate: {:?}", t0.elapsed());

    let t1 = Instant::now();
    let photos = histogram_match(photos);
    println!("match: {:?}", t1.elapsed());

    let t2 = Instant::now();
    let depth_maps = render_depth_maps(&model, &photos).unwrap();
    let eps_z = depth_epsilon(&model);
    println!("depth maps: {:?}", t2.elapsed());

    let scene_config: SceneConfig = serde_json::from_str(&format!(
        r#"{{"proxy_path":"","camera_file":"","photo_dir":"","target_resolution":{target}}}"#
    )).unwrap();
    let opt = OptimizeConfig::from_scene(&scene_config);

    let t3 = Instant::now();
    let results: Vec<_> = (0..model.polygons.len())
        .map(|i| {
            let t = Instant::now();
            let r = optimize_polygon(i, &model, &photos, &depth_maps, eps_z, &opt).unwrap();
            println!("  polygon {i}: {:?} stages={:?} holes={:.3} eliminated={:?}",
                t.elapsed(),
                r.report.stages.iter().map(|s| (s.resolution, s.iterations, s.converged, s.final_loss as i64)).collect::<Vec<_>>(),
                r.report.hole_fraction,
                r.report.eliminated.iter().map(|e| e.photo).collect::<Vec<_>>());
            r
        })
        .collect();
    println!("optimize: {:?}", t3.elapsed());

    // GT charts at target res must match result layout for evaluation
    let report = evaluate_against_gt(&results, &gt, &photos).unwrap();
    for p in &report.per_polygon {
        println!("polygon {}: p90={:.4} p95={:.4} ssim={:.4} qf={:.3} qvc={:.3} holes={:.3}",
            p.polygon, p.error_p90, p.error_p95, p.ssim, p.q_front, p.q_vc, p.hole_fraction);
    }
    println!("aggregate: p90={:.4} p95={:.4} ssim={:.4}", report.aggregate_error_p90, report.aggregate_error_p95, report.mean_ssim);
    println!("total: {:?}", t0.elapsed());
}
