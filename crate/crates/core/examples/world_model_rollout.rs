//! Trains a small world model for a few hundred steps, saves a checkpoint,
//! reloads it and writes current and predicted future renders for one
//! held-out transition.
//!
//! cargo run --release --example world_model_rollout -- [iterations] [out_dir]

use std::path::PathBuf;

use splatworld::persistence::{write_bundle, write_png};
use splatworld::synthetic::Task;
use splatworld::train::{evaluate, load_model, train_world, transitions, DataSpec, RunConfig, Split};

fn main() -> splatworld::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations = args.first().and_then(|s| s.parse().ok()).unwrap_or(400);
    let out = PathBuf::from(args.get(1).cloned().unwrap_or_else(|| "out/world_model_rollout".into()));
    let config = RunConfig {
        iterations,
        image_width: 48,
        image_height: 48,
        lr_warmup: iterations / 4,
        checkpoint_every: 0,
        losses: splatworld::losses::LossWeights {
            warmup_iters: iterations / 2,
            ..Default::default()
        },
        data: DataSpec {
            tasks: vec![Task::PushToTarget, Task::StackBlocks],
            episodes_per_task: 6,
            held_out_per_task: 1,
            supervision_cameras: 6,
            views: vec![0, 1, 4],
            dataset: None,
        },
        ..RunConfig::default()
    };
    train_world(&config, Some(&out))?;
    let (config, model) = load_model(&out.join("final.spwm"))?;
    let held = transitions(&config, Split::Eval)?;
    let report = evaluate(&model, &held)?;
    println!(
        "{} held-out transitions: current {:.2} dB, future {:.2} dB, no-motion {:.2} dB, head accuracy {:?}",
        report.transitions, report.current_psnr, report.future_psnr, report.baseline_psnr, report.head_accuracy
    );
    let t = &held[0];
    let cams: Vec<_> = t.views.iter().map(|v| v.camera.clone()).collect();
    let roll = model.rollout_future(&t.observation, &t.camera, t.task, &t.action, &cams)?;
    for (i, v) in t.views.iter().enumerate() {
        write_bundle(&out, &format!("view{i}_t"), &roll.current[i])?;
        write_bundle(&out, &format!("view{i}_t1"), &roll.future[i])?;
        write_png(&out.join(format!("view{i}_t1_truth.png")), v.camera.width, v.camera.height, &v.future_rgb.to_rgb8())?;
    }
    println!("predicted action {:?}, expert {:?}", roll.logits.argmax(), t.action);
    println!("wrote {} ({} gaussians)", out.display(), roll.scene_t.len());
    Ok(())
}
