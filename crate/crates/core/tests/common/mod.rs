//! Shared test helpers: random scenes, a brute-force reference renderer and
//! flat parameter views for finite-difference checks.
#![allow(dead_code)]

use nalgebra::{Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatworld::camera::Camera;
use splatworld::gaussian::{covariance3d, sh_to_rgb, DynamicScene, GaussianPrimitive};
use splatworld::image::ImageBundle;
use splatworld::raster::PrimitiveGrad;

pub const FIELDS_PER_PRIMITIVE: usize = 26;

pub fn random_scene(seed: u64, count: usize) -> DynamicScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = (0..count)
        .map(|_| {
            let mut sh = [0.0; 12];
            for v in sh.iter_mut() {
                *v = rng.gen_range(-0.6..0.6);
            }
            GaussianPrimitive::new(
                Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(2.0..4.0)),
                sh,
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
                Vector3::new(rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3)),
                rng.gen_range(0.2..0.9),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
            .unwrap()
        })
        .collect();
    DynamicScene::new(primitives, Vector3::new(0.2, 0.3, 0.4))
}

pub fn test_camera(size: usize) -> Camera {
    Camera::identity(size, size, size as f64 * 1.1)
}

/// One primitive projected to the image plane.
pub struct Splat {
    pub depth: f64,
    pub index: usize,
    pub mean: [f64; 2],
    pub inv: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    pub feature: Vector3<f64>,
}

impl Splat {
    /// Clipped opacity at pixel `(x, y)`.
    pub fn alpha(&self, x: f64, y: f64) -> f64 {
        let d = nalgebra::Vector2::new(x - self.mean[0], y - self.mean[1]);
        let g = (-0.5 * (d.transpose() * self.inv * d)[0]).exp();
        (self.opacity * g).min(0.99)
    }
}

/// Projects every visible primitive and sorts front to back.
pub fn project_all(scene: &DynamicScene, cam: &Camera, low_pass: f64) -> Vec<Splat> {
    let w = cam.rotation_matrix();
    let t = cam.translation_vector();
    let center = cam.center();
    let mut projs = Vec::new();
    for (index, p) in scene.primitives.iter().enumerate() {
        let pc = w * p.position() + t;
        if !(pc.z > cam.near && pc.z < cam.far) {
            continue;
        }
        let j = nalgebra::Matrix2x3::new(
            cam.fx / pc.z,
            0.0,
            -cam.fx * pc.x / (pc.z * pc.z),
            0.0,
            cam.fy / pc.z,
            -cam.fy * pc.y / (pc.z * pc.z),
        );
        let sigma = covariance3d(p.rotation(), p.scale()).unwrap();
        let cov = j * w * sigma * w.transpose() * j.transpose() + Matrix2::identity() * low_pass;
        if cov.determinant() < 1e-12 {
            continue;
        }
        let dir = (p.position() - center).normalize();
        projs.push(Splat {
            depth: pc.z,
            index,
            mean: [cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy],
            inv: cov.try_inverse().unwrap(),
            opacity: p.opacity(),
            color: sh_to_rgb(p.sh_coeffs(), &dir).unwrap(),
            feature: *p.semantic(),
        });
    }
    projs.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    projs
}

/// Brute-force renderer: global depth sort, every primitive at every pixel,
/// no thresholds, no early termination.
pub fn naive_render(scene: &DynamicScene, cam: &Camera, background: Vector3<f64>, low_pass: f64) -> ImageBundle {
    let projs = project_all(scene, cam, low_pass);
    let mut out = ImageBundle::zeros(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut trans = 1.0;
            let mut rgb = [0.0; 3];
            let mut feat = [0.0; 3];
            let mut depth = 0.0;
            for p in &projs {
                let a = p.alpha(x as f64, y as f64);
                for k in 0..3 {
                    rgb[k] += a * trans * p.color[k];
                    feat[k] += a * trans * p.feature[k];
                }
                depth += a * trans * p.depth;
                trans *= 1.0 - a;
            }
            for k in 0..3 {
                rgb[k] += trans * background[k];
            }
            out.rgb.pixel_mut(x, y).copy_from_slice(&rgb);
            out.feature.pixel_mut(x, y).copy_from_slice(&feat);
            out.depth.pixel_mut(x, y)[0] = depth;
            out.alpha.pixel_mut(x, y)[0] = 1.0 - trans;
        }
    }
    out
}

/// Random per-pixel weights; the loss is their inner product with a render.
pub fn random_weights(seed: u64, width: usize, height: usize) -> ImageBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ImageBundle::zeros(width, height);
    for img in [&mut w.rgb, &mut w.feature, &mut w.depth, &mut w.alpha] {
        for v in img.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    w
}

pub fn weighted_sum(bundle: &ImageBundle, weights: &ImageBundle) -> f64 {
    [
        (&bundle.rgb, &weights.rgb),
        (&bundle.feature, &weights.feature),
        (&bundle.depth, &weights.depth),
        (&bundle.alpha, &weights.alpha),
    ]
    .iter()
    .map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>())
    .sum()
}

/// position, sh, rotation, scale, opacity, semantic.
pub fn flatten_primitive(p: &GaussianPrimitive) -> Vec<f64> {
    let mut v = Vec::with_capacity(FIELDS_PER_PRIMITIVE);
    v.extend(p.position().iter());
    v.extend(p.sh_coeffs().iter());
    v.extend(p.rotation().iter());
    v.extend(p.scale().iter());
    v.push(p.opacity());
    v.extend(p.semantic().iter());
    v
}

pub fn primitive_from_flat(v: &[f64]) -> GaussianPrimitive {
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
    .unwrap()
}

pub fn flatten_grad(g: &PrimitiveGrad) -> Vec<f64> {
    let mut v = Vec::with_capacity(FIELDS_PER_PRIMITIVE);
    v.extend(g.position.iter());
    v.extend(g.sh_coeffs.iter());
    v.extend(g.rotation.iter());
    v.extend(g.scale.iter());
    v.push(g.opacity);
    v.extend(g.semantic.iter());
    v
}

pub fn scene_from_flat(template: &DynamicScene, flat: &[f64]) -> DynamicScene {
    let primitives = flat.chunks(FIELDS_PER_PRIMITIVE).map(primitive_from_flat).collect();
    DynamicScene {
        primitives,
        ..template.clone()
    }
}

pub fn flatten_scene(scene: &DynamicScene) -> Vec<f64> {
    scene.primitives.iter().flat_map(flatten_primitive).collect()
}

pub const FIELD_NAMES: [&str; 6] = ["position", "sh_coeffs", "rotation", "scale", "opacity", "semantic"];

/// Maps a coordinate within a primitive's flat vector to its field name.
pub fn field_of(offset: usize) -> &'static str {
    match offset {
        0..=2 => "position",
        3..=14 => "sh_coeffs",
        15..=18 => "rotation",
        19..=21 => "scale",
        22 => "opacity",
        _ => "semantic",
    }
}
