//! Command-line front end: `texture` runs the full reconstruction,
//! `synth` generates a synthetic scene, `eval` scores a reconstruction
//! against ground truth. Exit codes: 0 success, 1 internal error, 2
//! invalid input.

use clap::{Args, Parser, Subcommand};
use difftex::pipeline::{
    export_run, load_scene_config, run_eval, run_synth, run_texture_pipeline, write_eval_report,
};
use difftex::synth::{builtin_spec, SynthSpec};
use difftex::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "difftex", version, about = "Texture maps for planar proxy models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct per-polygon textures for a calibrated scene.
    Texture(TextureArgs),
    /// Generate a synthetic scene with ground-truth textures.
    Synth(SynthArgs),
    /// Score a reconstruction against ground-truth textures.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TextureArgs {
    /// Scene description JSON (paths resolve relative to it).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Target texture resolution (256, 512, 1024 or 2048).
    #[arg(long)]
    max_res: Option<usize>,
    /// Render-loss coefficient.
    #[arg(long)]
    alpha: Option<f64>,
    /// Perspective-loss coefficient.
    #[arg(long)]
    beta: Option<f64>,
    /// Parameter-loss coefficient.
    #[arg(long)]
    omega: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Activation threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Photo-elimination zero-weight fraction.
    #[arg(long = "tau-w")]
    tau_w: Option<f64>,
    /// Smoothness constant of the parameter loss.
    #[arg(long)]
    lambda_s: Option<f64>,
    /// Variance-of-Laplacian blur threshold.
    #[arg(long)]
    blur_threshold: Option<f64>,
    /// Incline filter limit in degrees.
    #[arg(long)]
    incline_limit: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: DIFFTEX_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Builtin spec name (quad12, box24, corner-biased) or a JSON file.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstruction directory (uses its textures/ subdirectory).
    #[arg(long)]
    recon: PathBuf,
    /// Ground-truth directory (a synth run's gt/).
    #[arg(long)]
    gt: PathBuf,
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("DIFFTEX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn remedy(err: &Error) -> &'static str {
    match err {
        Error::MissingPath(_) => "check the path spelling and working directory",
        Error::CameraCountMismatch { .. } | Error::MissingCameraEntry(_) => {
            "every photo file needs exactly one entry in cameras.json"
        }
        Error::NonOrthonormalRotation { .. } => {
            "re-export the camera rotations; they must be orthonormal with det +1"
        }
        Error::NonPlanarFace { .. } => "split or flatten the face in the proxy mesh",
        Error::AllPhotosFiltered(_) => {
            "lower --blur-threshold or raise --incline-limit, or check camera poses"
        }
        Error::InvalidConfig(_) | Error::InvalidSpec(_) => "see --help for valid ranges",
        _ => "re-run with RUST_LOG=debug for details",
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Texture(args) => {
            let mut config = load_scene_config(&args.scene)?;
            config.out_dir = args.out.clone();
            if let Some(v) = args.max_res {
                config.target_resolution = v;
            }
            if let Some(v) = args.alpha {
                config.alpha = v;
            }
            if let Some(v) = args.beta {
                config.beta = v;
            }
            if let Some(v) = args.omega {
                config.omega = v;
            }
            if let Some(v) = args.lr {
                config.lr = v;
            }
            if let Some(v) = args.tau {
                config.tau = v;
            }
            if let Some(v) = args.tau_w {
                config.tau_w = v;
            }
            if let Some(v) = args.lambda_s {
                config.lambda_s = v;
            }
            if let Some(v) = args.blur_threshold {
                config.blur_threshold = v;
            }
            if let Some(v) = args.incline_limit {
                config.incline_limit_deg = v;
            }
            if let Some(v) = args.seed {
                config.seed = v;
            }
            let threads = thread_count(args.threads);
            let mut output = run_texture_pipeline(&config, threads)?;
            export_run(&mut output, &args.out)?;
            for polygon in &output.manifest.polygons {
                println!(
                    "polygon {:3}: {} stages, holes {:.2}%, q_front {:.3}, q_vc {:.3}",
                    polygon.report.polygon,
                    polygon.report.stages.len(),
                    polygon.report.hole_fraction * 100.0,
                    polygon.q_front,
                    polygon.q_vc
                );
            }
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Synth(args) => {
            let spec: SynthSpec = if let Some(builtin) = builtin_spec(&args.spec) {
                builtin
            } else {
                let path = PathBuf::from(&args.spec);
                if !path.exists() {
                    return Err(Error::InvalidSpec(format!(
                        "'{}' is neither a builtin spec (quad12, box24, corner-biased) nor a file",
                        args.spec
                    )));
                }
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path,
                    message: e.to_string(),
                })?
            };
            run_synth(&spec, &args.out)?;
            println!("wrote synthetic scene to {}", args.out.display());
            Ok(())
        }
        Command::Eval(args) => {
            let report = run_eval(&args.recon, &args.gt)?;
            for p in &report.per_polygon {
                println!(
                    "{}: error_p90 {:.4}, error_p95 {:.4}, ssim {:.4}",
                    p.name, p.error_p90, p.error_p95, p.ssim
                );
            }
            println!(
                "aggregate: error_p90 {:.4}, error_p95 {:.4}, mean ssim {:.4}",
                report.error_p90, report.error_p95, report.mean_ssim
            );
            write_eval_report(&report, &args.recon)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            eprintln!("hint: {}", remedy(&err));
            if err.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
