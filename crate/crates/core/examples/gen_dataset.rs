//! Writes a small multi-task dataset to disk and reads it back as training
//! transitions.
//!
//! cargo run --release --example gen_dataset -- [out_dir] [episodes_per_task]

use std::path::PathBuf;

use splatworld::persistence::load_manifest;
use splatworld::synthetic::{gen_dataset, DataConfig};
use splatworld::train::{load_transitions, Split};

fn main() -> splatworld::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().cloned().unwrap_or_else(|| "out/dataset".into()));
    let episodes = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let config = DataConfig {
        episodes_per_task: episodes,
        width: 64,
        height: 64,
        supervision_cameras: 6,
        ..DataConfig::default()
    };
    let written = gen_dataset(&config, &out)?;
    println!("{} keyframes across {} episodes", written.samples.len(), written.episodes().len());
    let manifest = load_manifest(&out)?;
    for split in [Split::Train, Split::Eval] {
        let t = load_transitions(&out, &manifest, &[0, 1, 3], 1, split)?;
        println!("{split:?}: {} transitions", t.len());
    }
    Ok(())
}
