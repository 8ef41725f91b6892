//! Trains the world model on scripted push episodes and compares predicted
//! next frames against the no-motion baseline on held-out episodes.
//!
//! cargo run --release --example push_dynamics -- [iterations] [episodes] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use splatworld::synthetic::Task;
use splatworld::train::{evaluate, transitions, DataSpec, RunConfig, Split, Trainer};

fn main() -> splatworld::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let episodes: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let out = args.get(2).map(PathBuf::from);
    let config = RunConfig {
        iterations,
        image_width: 64,
        image_height: 64,
        checkpoint_every: 0,
        data: DataSpec {
            tasks: vec![Task::PushToTarget],
            episodes_per_task: episodes + 5,
            held_out_per_task: 5,
            supervision_cameras: 8,
            views: vec![0, 1, 4],
            dataset: None,
        },
        ..RunConfig::default()
    };
    let start = Instant::now();
    let train = transitions(&config, Split::Train)?;
    let held = transitions(&config, Split::Eval)?;
    println!(
        "{} training and {} held-out transitions ({:.1}s)",
        train.len(),
        held.len(),
        start.elapsed().as_secs_f64()
    );
    let mut trainer = Trainer::new(config)?;
    let report_every = (iterations / 10).max(1);
    let start = Instant::now();
    let mut snapshots = Vec::new();
    trainer.run(&train, out.as_deref(), |t, rec| {
        if (rec.iteration + 1) % report_every == 0 {
            snapshots.push((rec.clone(), t.model.clone()));
        }
    })?;
    for (rec, model) in &snapshots {
        let r = evaluate(model, &held)?;
        println!(
            "iter {:>6} loss {:.4} act {:.3} geo {:.5} dyna {:.5} | held-out future {:.2} dB baseline {:.2} dB current {:.2} dB acc {:?}",
            rec.iteration + 1,
            rec.total,
            rec.act,
            rec.geo,
            rec.dyna,
            r.future_psnr,
            r.baseline_psnr,
            r.current_psnr,
            r.head_accuracy.map(|a| (a * 100.0).round() / 100.0)
        );
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
