//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error. Failures print a single `error kind=<tag>: <message>` line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use splatworld::action::DiscreteAction;
use splatworld::camera::Camera;
use splatworld::fit::{fit_views, ring_views, FitConfig, View};
use splatworld::persistence::{export_ply, load_manifest, write_bundle};
use splatworld::synthetic::{default_scene, gen_dataset, load_rig, raycast_render, script_episode_with, CameraRig, Task};
use splatworld::train::{evaluate, load_model, train_world, transitions, RunConfig, Split};
use splatworld::world_model::Observation;
use splatworld::{Error, Result};

#[derive(Parser)]
#[command(name = "splatworld", version, about = "Dynamic Gaussian splatting world model")]
struct Cli {
    /// Run configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the deterministic reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (or file, for export-ply).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Script, ray-cast and write a dataset.
    GenData,
    /// Optimize free Gaussians against the views of one keyframe.
    FitScene(FitArgs),
    /// Train the world model.
    TrainWorld(TrainArgs),
    /// Render the regressed scene of an observation.
    Render(RenderArgs),
    /// Render an observation and its predicted successor.
    PredictFuture(PredictArgs),
    /// Score a checkpoint on a data split.
    Eval(EvalArgs),
    /// Write the regressed Gaussians of an observation as PLY.
    ExportPly(ExportArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory; without it the default three-box scene is used.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Sample index in the dataset manifest.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Optimizer steps.
    #[arg(long, default_value_t = 5000)]
    iterations: u64,
    /// Number of free Gaussians.
    #[arg(long, default_value_t = 2048)]
    gaussians: usize,
    /// Image size for the default scene.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory; overrides the configured data source.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides the configured iteration count.
    #[arg(long)]
    iterations: Option<u64>,
}

/// Where an observation comes from: a dataset sample or a freshly scripted
/// episode.
#[derive(Args)]
struct ObservationArgs {
    /// World-model checkpoint to load.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory to take the observation from.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Sample index in the dataset manifest.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Task of the scripted episode when no dataset is given.
    #[arg(long, default_value = "push_to_target")]
    task: String,
    /// Seed of the scripted episode when no dataset is given.
    #[arg(long, default_value_t = 0)]
    episode_seed: u64,
    /// Keyframe of the scripted episode when no dataset is given.
    #[arg(long, default_value_t = 0)]
    keyframe: usize,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    /// Comma-separated rig camera indices (0 is the front camera).
    #[arg(long, default_value = "0")]
    cameras: String,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    /// Comma-separated rig camera indices (0 is the front camera).
    #[arg(long, default_value = "0")]
    cameras: String,
    /// `translation,rot_x,rot_y,rot_z,open,collision` bins; defaults to the
    /// expert action of the observation.
    #[arg(long)]
    action: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// World-model checkpoint to score.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to the data source stored in the checkpoint.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `train` or `eval`.
    #[arg(long, default_value = "eval")]
    split: String,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    /// Export the predicted next-step Gaussians instead of the current ones.
    #[arg(long)]
    future: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage: {first}");
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPLATWORLD_LOG", "info")).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error kind=usage: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool set once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, fallback: &Path) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => {
            let cfg = run_config(cli)?;
            let out = out_dir(cli, &cfg.out.join("data"));
            let manifest = gen_dataset(&cfg.data_config(), &out)?;
            println!("wrote {} samples to {}", manifest.samples.len(), out.display());
        }
        Command::FitScene(a) => fit_scene(cli, a)?,
        Command::TrainWorld(a) => {
            let mut cfg = run_config(cli)?;
            if let Some(d) = &a.dataset {
                cfg.data.dataset = Some(d.clone());
            }
            if let Some(n) = a.iterations {
                cfg.iterations = n;
            }
            cfg.validate()?;
            let out = cfg.out.clone();
            let t = train_world(&cfg, Some(&out))?;
            println!("trained {} iterations; checkpoint {}", t.iteration, out.join("final.spwm").display());
        }
        Command::Render(a) => {
            let (obs, cam, task, action, rig, model) = observation(&a.obs)?;
            let out = out_dir(cli, Path::new("render"));
            let cams = pick_cameras(&rig, &a.cameras)?;
            let r = model.rollout_future(&obs, &cam, task, &action, &cams)?;
            for (i, b) in r.current.iter().enumerate() {
                write_bundle(&out, &format!("cam{i:02}_t"), b)?;
            }
            println!("wrote {} bundles to {}", r.current.len(), out.display());
        }
        Command::PredictFuture(a) => {
            let (obs, cam, task, expert, rig, model) = observation(&a.obs)?;
            let action = match &a.action {
                Some(s) => parse_action(s)?,
                None => expert,
            };
            let out = out_dir(cli, Path::new("predict"));
            let cams = pick_cameras(&rig, &a.cameras)?;
            let r = model.rollout_future(&obs, &cam, task, &action, &cams)?;
            for (i, (now, next)) in r.current.iter().zip(&r.future).enumerate() {
                write_bundle(&out, &format!("cam{i:02}_t"), now)?;
                write_bundle(&out, &format!("cam{i:02}_t1"), next)?;
            }
            let predicted = r.logits.argmax();
            println!(
                "wrote {} camera pairs to {}; predicted action {:?}",
                r.current.len(),
                out.display(),
                predicted
            );
        }
        Command::Eval(a) => {
            let (mut cfg, model) = load_model(&a.checkpoint)?;
            if let Some(d) = &a.dataset {
                cfg.data.dataset = Some(d.clone());
            }
            let split = match a.split.as_str() {
                "train" => Split::Train,
                "eval" => Split::Eval,
                other => return Err(Error::Config(format!("unknown split `{other}`"))),
            };
            let data = transitions(&cfg, split)?;
            let report = evaluate(&model, &data)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            let out = out_dir(cli, Path::new("eval"));
            write_text(&out.join("results.json"), &text)?;
            println!("{text}");
        }
        Command::ExportPly(a) => {
            let (obs, cam, task, action, rig, model) = observation(&a.obs)?;
            let r = model.rollout_future(&obs, &cam, task, &action, &[rig.front.clone()])?;
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("scene.ply"));
            let scene = if a.future { &r.scene_t1 } else { &r.scene_t };
            export_ply(scene, &path)?;
            println!("wrote {} gaussians to {}", scene.len(), path.display());
        }
    }
    Ok(())
}

fn fit_scene(cli: &Cli, a: &FitArgs) -> Result<()> {
    let config = FitConfig {
        iterations: a.iterations,
        gaussians: a.gaussians,
        seed: cli.seed.unwrap_or(0),
        ..FitConfig::default()
    };
    let (train, held) = match &a.dataset {
        None => ring_views(&default_scene(), 20, a.size, a.size)?,
        Some(root) => {
            let manifest = load_manifest(root)?;
            let s = manifest
                .samples
                .get(a.frame)
                .ok_or_else(|| Error::IndexOutOfRange(format!("frame {} of {}", a.frame, manifest.samples.len())))?;
            let rig = load_rig(&root.join(&s.camera_file))?;
            let cams: Vec<Camera> = rig.all().cloned().collect();
            let mut train = Vec::new();
            let mut held = Vec::new();
            // ring cameras 5, 10, ... are held out, the rest train
            for (v, rec) in s.views.iter().enumerate() {
                let (rgb, depth, semantic) = s.load_view(root, v)?;
                let view = View {
                    camera: cams[rec.camera].clone(),
                    rgb,
                    depth,
                    semantic,
                };
                if rec.camera > 0 && rec.camera % 5 == 0 {
                    held.push(view);
                } else {
                    train.push(view);
                }
            }
            (train, held)
        }
    };
    let (scene, report) = fit_views(&train, &held, &config)?;
    let out = out_dir(cli, Path::new("fit"));
    export_ply(&scene, &out.join("scene.ply"))?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&out.join("fit_report.json"), &text)?;
    for (i, p) in report.held_out_psnr.iter().enumerate() {
        println!("held-out view {i}: {p:.2} dB");
    }
    println!("mean held-out PSNR {:.2} dB", report.mean_held_out_psnr);
    Ok(())
}

type Loaded = (Observation, Camera, Task, DiscreteAction, CameraRig, splatworld::world_model::WorldModel);

fn observation(a: &ObservationArgs) -> Result<Loaded> {
    let (cfg, model) = load_model(&a.checkpoint)?;
    match &a.dataset {
        Some(root) => {
            let manifest = load_manifest(root)?;
            let s = manifest
                .samples
                .get(a.frame)
                .ok_or_else(|| Error::IndexOutOfRange(format!("frame {} of {}", a.frame, manifest.samples.len())))?;
            let rig = load_rig(&root.join(&s.camera_file))?;
            let (rgb, depth, _) = s.load_view(root, 0)?;
            let obs = Observation {
                rgb,
                depth,
                proprioception: s.proprioception,
            };
            Ok((obs, rig.front.clone(), s.task, s.action, rig, model))
        }
        None => {
            let task: Task = a.task.parse()?;
            let dc = cfg.data_config();
            let ep = script_episode_with(task, a.episode_seed, &dc.script)?;
            let kf = ep
                .keyframes
                .get(a.keyframe)
                .ok_or_else(|| Error::IndexOutOfRange(format!("keyframe {} of {}", a.keyframe, ep.keyframes.len())))?;
            let rig = CameraRig::new(dc.width, dc.height, dc.supervision_cameras)?;
            let front = raycast_render(&kf.state, &rig.front);
            let obs = Observation {
                rgb: front.rgb,
                depth: front.depth,
                proprioception: kf.proprioception,
            };
            Ok((obs, rig.front.clone(), task, kf.action, rig, model))
        }
    }
}

fn pick_cameras(rig: &CameraRig, spec: &str) -> Result<Vec<Camera>> {
    let all: Vec<&Camera> = rig.all().collect();
    spec.split(',')
        .map(|s| {
            let i: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad camera index `{s}`")))?;
            all.get(i)
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::IndexOutOfRange(format!("camera {i} of {}", all.len())))
        })
        .collect()
}

fn parse_action(s: &str) -> Result<DiscreteAction> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad action `{s}`")))?;
    if v.len() != 6 || v[4] > 1 || v[5] > 1 {
        return Err(Error::Config(format!("action needs six bins, got `{s}`")));
    }
    Ok(DiscreteAction {
        translation_bin: v[0],
        rotation_bins: [v[1], v[2], v[3]],
        openness: v[4] as u8,
        collision: v[5] as u8,
    })
}
