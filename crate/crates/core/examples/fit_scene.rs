//! Fits free Gaussians to ring views of the default three-box scene and
//! reports held-out PSNR.
//!
//! cargo run --release --example fit_scene -- [iterations] [gaussians] [size] [out.ply]

use std::time::Instant;

use splatworld::fit::{fit_views, ring_views, FitConfig};
use splatworld::persistence::export_ply;
use splatworld::synthetic::default_scene;

fn main() -> splatworld::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let config = FitConfig {
        iterations: arg(0, 5000) as u64,
        gaussians: arg(1, 2048),
        ..FitConfig::default()
    };
    let size = arg(2, 64);
    let (train, held_out) = ring_views(&default_scene(), 20, size, size)?;
    let start = Instant::now();
    let (scene, report) = fit_views(&train, &held_out, &config)?;
    println!(
        "{} gaussians, {} iterations in {:.1}s",
        scene.len(),
        report.iterations,
        start.elapsed().as_secs_f64()
    );
    for (i, p) in report.held_out_psnr.iter().enumerate() {
        println!("held-out view {i}: {p:.2} dB");
    }
    println!("mean held-out PSNR {:.2} dB", report.mean_held_out_psnr);
    if let Some(path) = args.get(3) {
        export_ply(&scene, path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
