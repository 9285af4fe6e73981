//! Command line for the hiermotion pipeline: dataset generation, per-model
//! training, end-to-end generation, and evaluation.
//!
//! Exit codes: 0 success, 2 usage/config errors, 3 numeric failures,
//! 4 missing artifacts.

mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use hiermotion::diffusion::DiffusionError;
use hiermotion::metrics::EvalSample;
use hiermotion::motion::{Action, RootTransform, Skeleton};
use hiermotion::pipeline::{
    generate_interaction, MilestoneSource, ModelBundle, PipelineError, StartSpec, SubModel,
};
use hiermotion::synth::{load_dataset, make_dataset, make_scene, stand_pose, Dataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_MISSING: u8 = 4;

#[derive(Parser)]
#[command(name = "hiermotion", about = "Hierarchical human-object interaction synthesis")]
struct Cli {
    /// Cap on worker threads (also HIERMOTION_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset operations.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Train one sub-model.
    Train(TrainArgs),
    /// Generate approach-interact-leave sequences.
    Generate(GenerateArgs),
    /// Evaluate a generated set against a reference set.
    Evaluate(EvaluateArgs),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate the procedural dataset.
    Gen(DatasetGenArgs),
}

#[derive(Args)]
struct DatasetGenArgs {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sequences.
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// One of: vqvae, prior, milestones, milestone-poses, trajectory, infill.
    submodel: String,
    /// Dataset directory (from `dataset gen`).
    #[arg(long)]
    dataset: PathBuf,
    /// Directory for checkpoints and curves.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Override learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory with all six checkpoints.
    #[arg(long)]
    models: PathBuf,
    /// Number of sequences to generate.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene JSON; a procedural scene is synthesized when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Milestone source: diffusion or astar.
    #[arg(long, default_value = "diffusion")]
    planner: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated set: a generation output directory or a dataset directory.
    #[arg(long)]
    generated: PathBuf,
    /// Reference set: a dataset directory or generation output directory.
    #[arg(long)]
    reference: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report as a CSV row.
    #[arg(long)]
    csv: Option<PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::config(format!("{e:#}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::MissingCheckpoint(_) => EXIT_MISSING,
            PipelineError::Diffusion(DiffusionError::NanLoss(_)) => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("HIERMOTION_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or(if cli.deterministic { Some(1) } else { None });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let result = match cli.command {
        Command::Dataset {
            cmd: DatasetCmd::Gen(args),
        } => cmd_dataset_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Result<RunConfig, CliError> {
    let bad = cfg.validate();
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::config(format!(
            "invalid configuration values: {}",
            bad.join(", ")
        )))
    }
}

fn cmd_dataset_gen(args: DatasetGenArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.dataset.seed = seed;
    }
    if let Some(n) = args.n {
        cfg.dataset.n_sequences = n;
    }
    let cfg = validated(cfg)?;
    let dataset = make_dataset(&cfg.dataset, &args.out).map_err(|e| CliError {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })?;
    println!("sequences={}", dataset.items.len());
    println!("manifest_hash={}", dataset.manifest_hash);
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let sub = SubModel::parse(&args.submodel)?;
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.training.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.training.steps = steps;
    }
    if let Some(batch) = args.batch {
        cfg.training.batch = batch;
    }
    if let Some(lr) = args.lr {
        cfg.training.lr = lr;
    }
    let cfg = validated(cfg)?;
    if !args.dataset.join("manifest.json").exists() {
        return Err(CliError::config(format!(
            "missing dataset at {}",
            args.dataset.display()
        )));
    }
    let dataset = load_dataset(&args.dataset).map_err(|e| CliError::config(e.to_string()))?;
    let curve = hiermotion::pipeline::train_submodel(
        sub,
        &dataset,
        &cfg.pipeline,
        &cfg.training,
        &args.out,
    )?;
    let ckpt = args.out.join(sub.checkpoint_name());
    let hash =
        hiermotion::hash::sha256_file(&ckpt).map_err(|e| CliError::config(e.to_string()))?;
    println!("checkpoint={}", ckpt.display());
    println!("checkpoint_hash={hash}");
    if let Some(loss) = curve.final_loss() {
        println!("final_loss={loss}");
    }
    if sub == SubModel::Vqvae {
        // reconstruction quality on the training goal poses, in meters
        let model =
            hiermotion::vqvae::PartVqvae::<f32>::load(&ckpt).map_err(PipelineError::from)?;
        let ts = hiermotion::pipeline::prepare_training_set(&dataset, &cfg.pipeline.sensor)?;
        let poses: Vec<_> = ts.items.iter().map(|i| i.goal_pose.clone()).collect();
        let err = model
            .mean_joint_error(&poses)
            .map_err(PipelineError::from)?;
        println!("recon_error_m={err}");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GenerationManifest {
    seed: u64,
    planner: String,
    model_hashes: std::collections::BTreeMap<String, String>,
    scene: String,
    samples: Vec<SampleEntry>,
    apd_t: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    file: String,
    csv: String,
    n_approach: usize,
    n_leave: usize,
    frames: usize,
    goal_pos: [f64; 2],
    goal_facing: [f64; 2],
    goal_action: String,
    start_pos: [f64; 2],
    endpoint_pos: [f64; 2],
    time_ms: u128,
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let cfg = validated(load_config(&args.config)?)?;
    let seed = args.seed.unwrap_or(0);
    let planner = match args.planner.as_str() {
        "diffusion" => MilestoneSource::Diffusion,
        "astar" => MilestoneSource::AStar,
        other => {
            return Err(CliError::config(format!(
                "unknown planner {other:?}; expected diffusion or astar"
            )))
        }
    };
    let bundle = ModelBundle::<f32>::load(&args.models)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::config(e.to_string()))?;

    // scene: load or synthesize procedurally from the seed
    let scene = match &args.scene {
        Some(path) => hiermotion::sensing::load_scene_json(path)
            .map_err(|e| CliError::config(e.to_string()))?,
        None => {
            let mut rng = hiermotion::rng::stream_rng(seed, "generate/scene");
            make_scene(&cfg.dataset, &mut rng).map_err(|e| CliError::config(e.to_string()))?
        }
    };
    let scene_name = "scene.json";
    hiermotion::sensing::save_scene_json(&args.out.join(scene_name), &scene)
        .map_err(|e| CliError::config(e.to_string()))?;

    let object = scene.objects.first().cloned().ok_or_else(|| {
        CliError::config("scene has no objects; generation needs an interaction target")
    })?;
    let skeleton = Skeleton::default15();

    let results: Vec<Result<(SampleEntry, Vec<[f64; 2]>), CliError>> = (0..args.samples)
        .into_par_iter()
        .map(|i| {
            let started = std::time::Instant::now();
            let mut rng = hiermotion::rng::stream_rng(seed, &format!("generate/sample/{i}"));
            let (start_root, endpoint) = sample_start_and_endpoint(&scene, &object, &mut rng);
            let start = StartSpec {
                root: start_root,
                action: Action::Idle,
                pose: stand_pose(),
            };
            let (seq, info) = generate_interaction(
                &bundle,
                &start,
                &object,
                &endpoint,
                &scene,
                planner,
                &mut rng,
                |_| {},
            )?;
            let file = format!("motion_{i:03}.json");
            let csv = format!("motion_{i:03}.csv");
            hiermotion::motion::save_motion_json(&args.out.join(&file), &seq, &skeleton)
                .map_err(PipelineError::from)?;
            hiermotion::motion::save_motion_csv(&args.out.join(&csv), &seq, &skeleton)
                .map_err(PipelineError::from)?;
            let path = seq.root_path();
            Ok((
                SampleEntry {
                    file,
                    csv,
                    n_approach: info.n_approach,
                    n_leave: info.n_leave,
                    frames: info.frames,
                    goal_pos: info.goal_root.pos,
                    goal_facing: info.goal_root.facing,
                    goal_action: info.goal_action.name().to_string(),
                    start_pos: start_root.pos,
                    endpoint_pos: endpoint.pos,
                    time_ms: started.elapsed().as_millis(),
                },
                path,
            ))
        })
        .collect();

    let mut samples = Vec::with_capacity(args.samples);
    let mut paths = Vec::with_capacity(args.samples);
    for r in results {
        let (entry, path) = r?;
        samples.push(entry);
        paths.push(path);
    }
    // trajectory diversity summary over the generated roots
    let apd_t = if paths.len() >= 2 {
        let feats: Vec<Vec<f64>> = paths
            .iter()
            .map(|p| resample_path(p, 32).into_iter().flatten().collect())
            .collect();
        hiermotion::metrics::apd(&feats).ok()
    } else {
        None
    };
    let manifest = GenerationManifest {
        seed,
        planner: args.planner.clone(),
        model_hashes: model_hashes(&args.models)?,
        scene: scene_name.to_string(),
        samples,
        apd_t,
    };
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::config(e.to_string()))?,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    println!("samples={}", args.samples);
    if let Some(a) = apd_t {
        println!("apd_t={a}");
    }
    println!("out={}", args.out.display());
    Ok(())
}

fn model_hashes(dir: &Path) -> Result<std::collections::BTreeMap<String, String>, CliError> {
    let mut map = std::collections::BTreeMap::new();
    for sub in SubModel::ALL {
        let name = sub.checkpoint_name();
        let hash = hiermotion::hash::sha256_file(&dir.join(&name))
            .map_err(|e| CliError::config(e.to_string()))?;
        map.insert(name, hash);
    }
    Ok(map)
}

fn resample_path(path: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    if path.len() < 2 {
        return vec![path.first().copied().unwrap_or([0.0, 0.0]); n];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 * (path.len() - 1) as f64 / (n - 1) as f64;
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(path.len() - 1);
            let w = t - lo as f64;
            [
                path[lo][0] + w * (path[hi][0] - path[lo][0]),
                path[lo][1] + w * (path[hi][1] - path[lo][1]),
            ]
        })
        .collect()
}

fn sample_start_and_endpoint(
    scene: &hiermotion::sensing::Scene,
    object: &hiermotion::motion::SceneObject,
    rng: &mut impl rand::Rng,
) -> (RootTransform, RootTransform) {
    let b = scene.bounds;
    let mut draw = |min_d: f64| -> RootTransform {
        for _ in 0..400 {
            let p = [
                rng.gen_range(b.min[0] + 0.3..b.max[0] - 0.3),
                rng.gen_range(b.min[1] + 0.3..b.max[1] - 0.3),
            ];
            let anchor = &object.goal_anchors[0].root.pos;
            let d = ((p[0] - anchor[0]).powi(2) + (p[1] - anchor[1]).powi(2)).sqrt();
            if d >= min_d && scene.support_height(p) == 0.0 {
                let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                return RootTransform::from_angle(p, angle);
            }
        }
        RootTransform::from_angle([b.min[0] + 0.5, b.min[1] + 0.5], 0.0)
    };
    (draw(1.5), draw(1.5))
}

enum EvalSet {
    Generation(PathBuf),
    Dataset(Box<Dataset>),
}

fn load_eval_set(dir: &Path) -> Result<EvalSet, CliError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(CliError::config(format!(
            "no manifest.json in {}",
            dir.display()
        )));
    }
    let value: serde_json::Value = serde_json::from_slice(
        &std::fs::read(&manifest_path).map_err(|e| CliError::config(e.to_string()))?,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    if value.get("samples").is_some() {
        Ok(EvalSet::Generation(dir.to_path_buf()))
    } else if value.get("sequences").is_some() {
        let ds = load_dataset(dir).map_err(|e| CliError::config(e.to_string()))?;
        Ok(EvalSet::Dataset(Box::new(ds)))
    } else {
        Err(CliError::config(format!(
            "{} is neither a generation output nor a dataset",
            dir.display()
        )))
    }
}

fn eval_samples(set: EvalSet) -> Result<(Vec<EvalSample>, Vec<String>), CliError> {
    match set {
        EvalSet::Dataset(ds) => {
            let mut out = Vec::with_capacity(ds.items.len());
            for item in &ds.items {
                let anchor = item
                    .scene
                    .objects
                    .first()
                    .and_then(|o| o.goal_anchors.iter().find(|a| a.action == item.action));
                out.push(EvalSample {
                    sequence: item.sequence.clone(),
                    scene: item.scene.clone(),
                    goal: anchor.map(|a| (a.root, a.action)),
                });
            }
            Ok((out, Skeleton::default15().joint_names))
        }
        EvalSet::Generation(dir) => {
            let manifest: GenerationManifest = serde_json::from_slice(
                &std::fs::read(dir.join("manifest.json"))
                    .map_err(|e| CliError::config(e.to_string()))?,
            )
            .map_err(|e| CliError::config(e.to_string()))?;
            let scene = hiermotion::sensing::load_scene_json(&dir.join(&manifest.scene))
                .map_err(|e| CliError::config(e.to_string()))?;
            let mut out = Vec::with_capacity(manifest.samples.len());
            let mut joints = Vec::new();
            for s in &manifest.samples {
                let (seq, skel) = hiermotion::motion::load_motion_json(&dir.join(&s.file))
                    .map_err(|e| CliError::config(e.to_string()))?;
                if joints.is_empty() {
                    joints = skel.joint_names.clone();
                }
                let goal_root = RootTransform::new(s.goal_pos, s.goal_facing)
                    .map_err(|e| CliError::config(e.to_string()))?;
                let action =
                    Action::parse(&s.goal_action).map_err(|e| CliError::config(e.to_string()))?;
                out.push(EvalSample {
                    sequence: seq,
                    scene: scene.clone(),
                    goal: Some((goal_root, action)),
                });
            }
            Ok((out, joints))
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (generated, gen_joints) = eval_samples(load_eval_set(&args.generated)?)?;
    let (reference, ref_joints) = eval_samples(load_eval_set(&args.reference)?)?;
    if gen_joints != ref_joints {
        return Err(CliError::config(
            "incompatible skeletons between generated and reference sets",
        ));
    }
    let report = hiermotion::metrics::evaluate(&generated, &reference)
        .map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(
        &args.out,
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::config(e.to_string()))?,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.to_csv()).map_err(|e| CliError::config(e.to_string()))?;
    }
    println!(
        "fd={:.4} apd_m={:.4} apd_t={:.4} penetration={:.3} sliding={:.4} unreachable={}",
        report.fd,
        report.apd_m,
        report.apd_t,
        report.penetration,
        report.sliding,
        report.n_unreachable
    );
    println!("report={}", args.out.display());
    Ok(())
}
