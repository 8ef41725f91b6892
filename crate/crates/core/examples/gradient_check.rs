//! Compares the rasterizer's analytic gradients with central differences for
//! every primitive field of a random scene.
//!
//! cargo run --release --example gradient_check -- [gaussians] [seed]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatworld::camera::Camera;
use splatworld::gaussian::{DynamicScene, GaussianPrimitive};
use splatworld::image::ImageBundle;
use splatworld::nn::grad_check;
use splatworld::raster::{render, render_backward, RasterSettings};

const FIELDS: [(&str, usize); 6] = [
    ("position", 3),
    ("sh", 12),
    ("rotation", 4),
    ("scale", 3),
    ("opacity", 1),
    ("semantic", 3),
];
const WIDTH: usize = 26;

fn unpack(v: &[f64]) -> GaussianPrimitive {
    let mut sh = [0.0; 12];
    sh.copy_from_slice(&v[3..15]);
    GaussianPrimitive::new(
        Vector3::new(v[0], v[1], v[2]),
        sh,
        [v[15], v[16], v[17], v[18]],
        Vector3::new(v[19], v[20], v[21]),
        v[22],
        Vector3::new(v[23], v[24], v[25]),
    )
    .expect("perturbed primitive stays valid")
}

fn main() -> splatworld::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let count = args.first().copied().unwrap_or(8) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(args.get(1).copied().unwrap_or(0));
    let mut point = Vec::with_capacity(count * WIDTH);
    for _ in 0..count {
        point.extend([rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(2.0..3.5)]);
        point.extend((0..12).map(|_| rng.gen_range(-0.5..0.5)));
        let q: [f64; 4] = [0.0; 4].map(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        point.extend(q.map(|v| v / n));
        point.extend((0..3).map(|_| rng.gen_range(0.05..0.3)));
        point.push(rng.gen_range(0.2..0.9));
        point.extend((0..3).map(|_| rng.gen_range(-1.0..1.0)));
    }
    let cam = Camera::identity(32, 32, 35.0);
    let settings = RasterSettings::exact();
    // the loss is a random linear functional of every output channel
    let mut weights = ImageBundle::zeros(32, 32);
    for img in [&mut weights.rgb, &mut weights.feature, &mut weights.depth, &mut weights.alpha] {
        img.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let loss_and_grad = |x: &[f64]| {
        let scene = DynamicScene::new(x.chunks(WIDTH).map(unpack).collect(), Vector3::zeros());
        let out = render(&scene, &cam, &settings).expect("render");
        let loss = [(&out.rgb, &weights.rgb), (&out.feature, &weights.feature), (&out.depth, &weights.depth), (&out.alpha, &weights.alpha)]
            .iter()
            .map(|(a, w)| a.data.iter().zip(&w.data).map(|(p, q)| p * q).sum::<f64>())
            .sum::<f64>();
        let grads = render_backward(&scene, &cam, &settings, &weights).expect("backward");
        let flat = grads
            .iter()
            .flat_map(|g| {
                let mut v = Vec::with_capacity(WIDTH);
                v.extend(g.position.iter());
                v.extend(g.sh_coeffs);
                v.extend(g.rotation);
                v.extend(g.scale.iter());
                v.push(g.opacity);
                v.extend(g.semantic.iter());
                v
            })
            .collect();
        (loss, flat)
    };
    let report = grad_check(loss_and_grad, &point, 1e-6);
    let mut offset = 0;
    for (name, width) in FIELDS {
        let worst = (0..count)
            .flat_map(|p| (offset..offset + width).map(move |k| p * WIDTH + k))
            .map(|i| {
                let (a, n) = (report.analytic[i], report.numeric[i]);
                (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
            })
            .fold(0.0, f64::max);
        println!("{name:<9} worst relative error {worst:.2e}");
        offset += width;
    }
    println!("overall {:.2e} over {} coordinates", report.max_rel_error, point.len());
    Ok(())
}
