//! Command-line front end for the depth completion pipeline.
//!
//! Subcommands cover the full workflow: `synth` writes a synthetic dataset
//! directory, `triangulate` turns a feature file into a constrained mesh,
//! `complete` runs mesh interpolation (and optionally refinement) on one
//! frame, `eval` scores a prediction against ground truth, and `render`
//! colormaps a depth PNG for inspection.
//!
//! Exit codes: 0 on success, 1 on data errors (reported to stderr as a
//! single `category: message` line), 2 on usage errors. Logging is
//! controlled by the `RUST_LOG` environment variable only.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tridepth::cdt::{prepare_sites, triangulate, DEFAULT_SNAP_TOLERANCE};
use tridepth::io::{
    self, load_frame, read_depth_png, read_features, read_mdr_params, render_depth_png,
    write_depth_png, write_features, write_image_png, write_mesh, write_pose, DatasetManifest,
    FrameRecord,
};
use tridepth::losses::{photometric_loss, smoothness_loss, sparse_consistency_loss, total_loss};
use tridepth::losses::{FrameWindow, LossBreakdown, LossWeights, SourceFrame, SsimConfig};
use tridepth::meshdepth::{sparse_raster, InterpolationMode};
use tridepth::metrics::{evaluate, DeltaThresholds, EvalReport};
use tridepth::pipeline::{complete_frame, MdrConfig, PipelineConfig};
use tridepth::synth::{box_wall_scene, fronto_parallel_scene, render, sample_features, SceneSpec};
use tridepth::{Error, ImageBuffer, Intrinsics, Pose, Result};

#[derive(Parser)]
#[command(
    name = "tridepth",
    version,
    about = "Sparse-to-dense depth completion from point and line features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory with ground truth
    Synth(SynthArgs),
    /// Triangulate a feature file into a constrained mesh JSON
    Triangulate(TriangulateArgs),
    /// Complete one frame: mesh depth, and optionally refined depth
    Complete(CompleteArgs),
    /// Score a predicted depth PNG against ground truth
    Eval(EvalArgs),
    /// Colormap a depth PNG for visual inspection
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// A wall at 2 m facing the camera
    FrontoParallel,
    /// An untextured box in front of a wall at 3 m
    BoxWall,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scene to generate
    #[arg(long, value_enum, conflicts_with = "scene", required_unless_present = "scene")]
    preset: Option<Preset>,
    /// Scene description JSON (alternative to --preset)
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Dataset directory to create
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    /// Number of frames; the camera slides sideways between frames
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Scene seed (presets only; --scene files carry their own)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Point features per frame (default fills the budget left by lines)
    #[arg(long)]
    points: Option<usize>,
    /// Line features per frame (default 40 when the scene has edges)
    #[arg(long)]
    lines: Option<usize>,
    /// Gaussian depth noise sigma in meters
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

#[derive(Args)]
struct TriangulateArgs {
    /// Feature JSON file
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SNAP_TOLERANCE)]
    snap_tol: f64,
    /// Mesh JSON output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    /// Stop after mesh interpolation
    Mesh,
    /// Also run refinement and the dense estimator
    Refined,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Intersect pixel rays with each facet's 3D plane
    Planar3d,
    /// Interpolate vertex depths barycentrically in the image
    Barycentric,
}

impl From<ModeArg> for InterpolationMode {
    fn from(m: ModeArg) -> InterpolationMode {
        match m {
            ModeArg::Planar3d => InterpolationMode::Planar3d,
            ModeArg::Barycentric => InterpolationMode::BarycentricZ,
        }
    }
}

#[derive(Args)]
struct CompleteArgs {
    /// Feature JSON file
    #[arg(long)]
    features: PathBuf,
    /// Intrinsics JSON file
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::Refined)]
    stage: StageArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Planar3d)]
    mode: ModeArg,
    /// Frame image (required when refining with network parameters)
    #[arg(long)]
    image: Option<PathBuf>,
    /// Refinement parameter file; omitted = identity refinement
    #[arg(long)]
    mdr_params: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SNAP_TOLERANCE)]
    snap_tol: f64,
    /// Output directory (zmesh.png, mask.png, and for --stage refined
    /// zrefined.png and zdense.png)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted depth PNG
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth PNG
    #[arg(long)]
    gt: PathBuf,
    /// Append-free CSV report path (header plus one row)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Frame name for the CSV row (default: the prediction file stem)
    #[arg(long)]
    frame: Option<String>,
    /// Also compute the training losses (needs --dataset)
    #[arg(long, default_value_t = false)]
    losses: bool,
    /// Dataset directory for loss evaluation
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Target frame index within the dataset
    #[arg(long, default_value_t = 0)]
    target: usize,
}

#[derive(Args)]
struct RenderArgs {
    /// Depth PNG to render
    #[arg(long)]
    depth: PathBuf,
    /// Output color PNG
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.category());
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => run_synth(args),
        Command::Triangulate(args) => run_triangulate(args),
        Command::Complete(args) => run_complete(args),
        Command::Eval(args) => run_eval(args),
        Command::Render(args) => run_render(args),
    }
}

fn read_scene(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path)?;
    let spec: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let base = match (&args.preset, &args.scene) {
        (Some(Preset::FrontoParallel), _) => {
            fronto_parallel_scene(args.width, args.height, args.seed)
        }
        (Some(Preset::BoxWall), _) => box_wall_scene(args.width, args.height, args.seed),
        (None, Some(path)) => read_scene(path)?,
        (None, None) => unreachable!("clap enforces preset or scene"),
    };
    if args.frames == 0 {
        return Err(Error::InvalidInput("--frames must be at least 1".into()));
    }
    let n_lines = args.lines.unwrap_or(if base.boxes.is_empty() { 0 } else { 40 });
    let n_points = args.points.unwrap_or(150usize.saturating_sub(n_lines));

    fs::create_dir_all(&args.out)?;
    let mut manifest = DatasetManifest::new(base.camera.intrinsics.clone());
    for i in 0..args.frames {
        // The camera slides 2 cm right (in its own frame) per frame.
        let shift = Pose::from_translation([-0.02 * i as f64, 0.0, 0.0]);
        let mut spec = base.clone();
        spec.camera.pose = shift.compose(&base.camera.pose);

        let (image, gt) = render(&spec)?;
        // Feature draws vary per frame; the world texture must not, so
        // only the sampling copy gets the offset seed.
        let mut feature_spec = spec.clone();
        feature_spec.seed = base.seed.wrapping_add(i as u64);
        let features = sample_features(&feature_spec, n_points, n_lines, args.noise_sigma)?;

        let dir = format!("frames/{i:03}");
        fs::create_dir_all(args.out.join(&dir))?;
        write_image_png(&args.out.join(format!("{dir}/image.png")), &image)?;
        write_depth_png(&args.out.join(format!("{dir}/gt.png")), &gt)?;
        write_features(&args.out.join(format!("{dir}/features.json")), &features)?;
        write_pose(&args.out.join(format!("{dir}/pose.json")), &spec.camera.pose)?;
        manifest.frames.push(FrameRecord {
            image: format!("{dir}/image.png"),
            gt_depth: Some(format!("{dir}/gt.png")),
            features: format!("{dir}/features.json"),
            pose: format!("{dir}/pose.json"),
        });
    }
    manifest.write(&args.out.join("manifest.json"))?;
    let mut k_json = serde_json::to_string_pretty(&manifest.intrinsics)
        .expect("intrinsics always serialize");
    k_json.push('\n');
    fs::write(args.out.join("intrinsics.json"), k_json)?;
    log::info!(
        "wrote {} frame(s) to {}",
        args.frames,
        args.out.display()
    );
    Ok(())
}

fn run_triangulate(args: TriangulateArgs) -> Result<()> {
    let features = read_features(&args.features)?;
    let prepared = prepare_sites(&features, args.snap_tol)?;
    let mesh = triangulate(&prepared)?;
    write_mesh(&args.out, &mesh)?;
    log::info!(
        "triangulated {} sites into {} facets",
        mesh.vertices().len(),
        mesh.facets().len()
    );
    Ok(())
}

fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn run_complete(args: CompleteArgs) -> Result<()> {
    let features = read_features(&args.features)?;
    let k = read_intrinsics(&args.intrinsics)?;
    let mdr = match &args.mdr_params {
        Some(path) => MdrConfig::Params(read_mdr_params(path)?),
        None => MdrConfig::Identity,
    };
    let image = match &args.image {
        Some(path) => io::read_image_png(path)?,
        None => {
            if matches!(mdr, MdrConfig::Params(_)) {
                return Err(Error::InvalidInput(
                    "refinement with network parameters needs --image".into(),
                ));
            }
            ImageBuffer::filled(k.width(), k.height(), 3, 0.5)?
        }
    };
    let cfg = PipelineConfig {
        mode: args.mode.into(),
        snap_tolerance: args.snap_tol,
        mdr,
        ..PipelineConfig::default()
    };
    let outputs = complete_frame(&image, &features, &k, &cfg)?;

    fs::create_dir_all(&args.out)?;
    write_depth_png(&args.out.join("zmesh.png"), &outputs.z_mesh)?;
    let mask_img = ImageBuffer::from_fn(outputs.mask.width(), outputs.mask.height(), 1, |x, y, _| {
        if outputs.mask.get(x, y) {
            1.0
        } else {
            0.0
        }
    })?;
    write_image_png(&args.out.join("mask.png"), &mask_img)?;
    if matches!(args.stage, StageArg::Refined) {
        write_depth_png(&args.out.join("zrefined.png"), &outputs.z_refined)?;
        write_depth_png(&args.out.join("zdense.png"), &outputs.z_dense)?;
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let pred = read_depth_png(&args.pred)?;
    let gt = read_depth_png(&args.gt)?;
    let report = evaluate(&pred, &gt, &DeltaThresholds::default())?;
    println!(
        "MAE {:.1} mm  RMSE {:.1} mm  d1 {:.1}%  d2 {:.1}%  d3 {:.1}%  valid {}",
        report.mae_mm, report.rmse_mm, report.acc1, report.acc2, report.acc3, report.valid_count
    );
    if let Some(csv_path) = &args.csv {
        let frame = args.frame.clone().unwrap_or_else(|| {
            args.pred
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "frame".into())
        });
        let mut text = String::new();
        text.push_str(EvalReport::csv_header());
        text.push('\n');
        text.push_str(&report.csv_row(&frame));
        text.push('\n');
        fs::write(csv_path, text)?;
    }
    if args.losses {
        let breakdown = eval_losses(&args, &pred)?;
        println!(
            "{}",
            serde_json::to_string(&breakdown).expect("loss record always serializes")
        );
    }
    Ok(())
}

/// Computes the training losses of a predicted depth for one dataset frame,
/// using every other frame in the dataset as a photometric source.
fn eval_losses(args: &EvalArgs, pred: &tridepth::DepthMap) -> Result<LossBreakdown> {
    let root = args.dataset.as_ref().ok_or_else(|| {
        Error::InvalidInput("--losses needs --dataset pointing at a synth directory".into())
    })?;
    let manifest = DatasetManifest::read(&root.join("manifest.json"))?;
    if args.target >= manifest.frames.len() {
        return Err(Error::InvalidInput(format!(
            "--target {} out of range, dataset has {} frames",
            args.target,
            manifest.frames.len()
        )));
    }
    let k = manifest.intrinsics.clone();
    let target = load_frame(root, &manifest.frames[args.target])?;
    let mut sources = Vec::new();
    for (i, rec) in manifest.frames.iter().enumerate() {
        if i != args.target {
            let f = load_frame(root, rec)?;
            sources.push(SourceFrame { image: f.image, pose: f.pose });
        }
    }
    let sparse = sparse_raster(&target.features, k.width(), k.height())?;
    let window = FrameWindow::new(target.image.clone(), sparse, target.pose, sources)?;
    let weights = LossWeights::default();
    let ssim = SsimConfig::default();
    let l_p = photometric_loss(&window, pred, &k, &weights, &ssim)?;
    let l_s = smoothness_loss(pred, window.target_image())?;
    let l_l = sparse_consistency_loss(pred, window.target_sparse())?;
    Ok(LossBreakdown {
        l_p,
        l_s,
        l_l,
        total: total_loss(l_p, l_s, l_l, &weights),
    })
}

fn run_render(args: RenderArgs) -> Result<()> {
    let depth = read_depth_png(&args.depth)?;
    render_depth_png(&args.out, &depth)
}
