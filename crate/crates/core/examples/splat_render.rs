//! Renders a handful of hand-placed Gaussians and writes the color, feature,
//! depth and alpha images.
//!
//! cargo run --release --example splat_render -- [out_dir]

use std::path::PathBuf;

use nalgebra::Vector3;
use splatworld::camera::Camera;
use splatworld::gaussian::{sh_from_rgb, DynamicScene, GaussianPrimitive};
use splatworld::persistence::write_bundle;
use splatworld::raster::{render_with_stats, RasterSettings};

fn main() -> splatworld::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/splat_render".into()));
    // an elongated red splat tilted 30° about z, a round green one behind it
    // and a flat blue disc at the back
    let tilt = (15f64).to_radians();
    let splats = vec![
        GaussianPrimitive::new(
            Vector3::new(-0.1, 0.0, 2.0),
            sh_from_rgb([0.9, 0.15, 0.1]),
            [tilt.cos(), 0.0, 0.0, tilt.sin()],
            Vector3::new(0.35, 0.06, 0.06),
            0.9,
            Vector3::new(1.0, 0.0, 0.0),
        )?,
        GaussianPrimitive::isotropic(Vector3::new(0.25, 0.1, 2.6), [0.2, 0.8, 0.3], 0.2, 0.8)?
            .with_semantic(Vector3::new(0.0, 1.0, 0.0))?,
        GaussianPrimitive::new(
            Vector3::new(0.0, 0.0, 3.5),
            sh_from_rgb([0.2, 0.3, 0.9]),
            [1.0, 0.0, 0.0, 0.0],
            Vector3::new(0.8, 0.8, 0.01),
            0.6,
            Vector3::new(0.0, 0.0, 1.0),
        )?,
    ];
    let scene = DynamicScene::new(splats, Vector3::new(0.05, 0.05, 0.05));
    let cam = Camera::look_at(
        Vector3::new(0.0, -0.4, 0.0),
        Vector3::new(0.0, 0.0, 2.5),
        Vector3::new(0.0, -1.0, 0.0),
        60f64.to_radians(),
        160,
        120,
    )?;
    let settings = RasterSettings::default().with_background(scene.background_color);
    let (bundle, stats) = render_with_stats(&scene, &cam, &settings)?;
    println!("{stats:?}");
    let covered = bundle.alpha.data.iter().filter(|&&a| a > 0.5).count();
    println!("{covered} of {} pixels more than half covered", cam.width * cam.height);
    write_bundle(&out, "splats", &bundle)?;
    println!("wrote {}", out.display());
    Ok(())
}
