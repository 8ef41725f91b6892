//! Direct optimization of a free set of Gaussians against posed images of a
//! single static scene.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{normalize_quat, normalize_quat_backward, sh_from_rgb, DynamicScene, GaussianPrimitive, SH_COEFFS};
use crate::image::{psnr, Image, ImageBundle};
use crate::losses::{cosine_with_grad, mse_with_grad};
use crate::nn::{join, sigmoid, OptimizerConfig, OptimizerState, Params};
use crate::raster::{render, render_backward, RasterSettings};
use crate::synthetic::{raycast_render, CameraRig, WorldState, BACKGROUND_RGB};

/// A posed ground-truth view.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub rgb: Image,
    /// Camera-space depth, 0 where nothing was hit; used only to seed
    /// positions.
    pub depth: Image,
    pub semantic: Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub gaussians: usize,
    pub iterations: u64,
    /// Training views rendered per update.
    pub views_per_step: usize,
    pub seed: u64,
    /// Weight of the semantic term relative to the photometric one.
    pub semantic_weight: f64,
    pub lr_position: f64,
    /// Every learning rate decays exponentially to this fraction of its
    /// initial value over the run.
    pub lr_final_fraction: f64,
    pub lr_color: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_semantic: f64,
    pub raster: RasterSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gaussians: 2048,
            iterations: 5000,
            views_per_step: 2,
            seed: 0,
            semantic_weight: 0.01,
            lr_position: 2e-3,
            lr_final_fraction: 0.01,
            lr_color: 2e-2,
            lr_rotation: 5e-3,
            lr_scale: 1e-2,
            lr_opacity: 3e-2,
            lr_semantic: 1e-2,
            raster: RasterSettings::default().with_background(Vector3::from(BACKGROUND_RGB)),
        }
    }
}

/// One tensor of per-primitive values, `cols` per row.
#[derive(Debug, Clone, PartialEq)]
struct Field {
    name: &'static str,
    cols: usize,
    data: Vec<f64>,
}

impl Params for Field {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, self.name), &[self.data.len() / self.cols, self.cols], &self.data);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, self.name), &mut self.data);
    }

    fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }
}

const POS: usize = 0;
const SH: usize = 1;
const ROT: usize = 2;
const LOG_SCALE: usize = 3;
const LOGIT: usize = 4;
const SEM: usize = 5;
const MIN_LOG_SCALE: f64 = -20.0;

/// Gaussians in unconstrained form: raw quaternion, log-scale, opacity logit.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeGaussians {
    fields: [Field; 6],
}

impl FreeGaussians {
    pub fn len(&self) -> usize {
        self.fields[POS].data.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_primitives(prims: &[GaussianPrimitive]) -> Self {
        let mut f = [
            Field { name: "position", cols: 3, data: Vec::new() },
            Field { name: "sh", cols: SH_COEFFS, data: Vec::new() },
            Field { name: "rotation", cols: 4, data: Vec::new() },
            Field { name: "log_scale", cols: 3, data: Vec::new() },
            Field { name: "opacity_logit", cols: 1, data: Vec::new() },
            Field { name: "semantic", cols: 3, data: Vec::new() },
        ];
        for p in prims {
            f[POS].data.extend(p.position().iter());
            f[SH].data.extend(p.sh_coeffs().iter());
            f[ROT].data.extend(p.rotation().iter());
            f[LOG_SCALE].data.extend(p.scale().iter().map(|s| s.ln()));
            let o = p.opacity().clamp(1e-6, 1.0 - 1e-6);
            f[LOGIT].data.push((o / (1.0 - o)).ln());
            f[SEM].data.extend(p.semantic().iter());
        }
        Self { fields: f }
    }

    pub fn to_scene(&self, background: Vector3<f64>) -> Result<DynamicScene> {
        let prims = (0..self.len())
            .map(|i| {
                let row = |k: usize| &self.fields[k].data[i * self.fields[k].cols..(i + 1) * self.fields[k].cols];
                let mut sh = [0.0; SH_COEFFS];
                sh.copy_from_slice(row(SH));
                let r = row(ROT);
                let s = row(LOG_SCALE);
                let m = row(SEM);
                let p = row(POS);
                GaussianPrimitive::new(
                    Vector3::new(p[0], p[1], p[2]),
                    sh,
                    normalize_quat([r[0], r[1], r[2], r[3]]).unwrap_or(crate::gaussian::IDENTITY_QUAT),
                    Vector3::new(s[0], s[1], s[2]).map(|v| v.max(MIN_LOG_SCALE).exp()),
                    sigmoid(row(LOGIT)[0]),
                    Vector3::new(m[0], m[1], m[2]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DynamicScene::new(prims, background))
    }
}

/// Seeds `count` Gaussians on surface points lifted from the views' depth
/// maps, sized by the distance to their nearest neighbours.
pub fn initialize_from_views(views: &[View], count: usize, seed: u64) -> Result<FreeGaussians> {
    let mut points: Vec<(Vector3<f64>, [f64; 3], [f64; 3])> = Vec::new();
    for v in views {
        for y in 0..v.camera.height {
            for x in 0..v.camera.width {
                let z = v.depth.pixel(x, y)[0];
                if z > 0.0 {
                    let p = v.camera.unproject(x as f64, y as f64, z);
                    let rgb = v.rgb.pixel(x, y);
                    let sem = v.semantic.pixel(x, y);
                    points.push((p, [rgb[0], rgb[1], rgb[2]], [sem[0], sem[1], sem[2]]));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyScene("no surface points in the training views".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..count).map(|_| rng.gen_range(0..points.len())).collect();
    let chosen: Vec<_> = picks.iter().map(|&i| points[i]).collect();
    let spacing: Vec<f64> = chosen
        .par_iter()
        .enumerate()
        .map(|(i, (p, _, _))| {
            let mut best = [f64::INFINITY; 3];
            for (j, (q, _, _)) in chosen.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (p - q).norm();
                if d > 1e-9 && d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let finite: Vec<f64> = best.into_iter().filter(|d| d.is_finite()).collect();
            if finite.is_empty() {
                0.01
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            }
        })
        .collect();
    let prims = chosen
        .iter()
        .zip(&spacing)
        .map(|((p, rgb, sem), s)| {
            GaussianPrimitive::new(
                *p,
                sh_from_rgb(*rgb),
                crate::gaussian::IDENTITY_QUAT,
                Vector3::repeat(s.clamp(1e-3, 0.1)),
                0.8,
                Vector3::from(*sem),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FreeGaussians::from_primitives(&prims))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: u64,
    pub final_train_loss: f64,
    pub held_out_psnr: Vec<f64>,
    pub mean_held_out_psnr: f64,
}

/// Optimizes free Gaussians against `train` views and scores `held_out`.
pub fn fit_views(train: &[View], held_out: &[View], config: &FitConfig) -> Result<(DynamicScene, FitReport)> {
    if train.is_empty() || config.views_per_step == 0 || config.gaussians == 0 {
        return Err(Error::InvalidParameter("need training views, views_per_step > 0 and gaussians > 0".into()));
    }
    config.raster.validate()?;
    let bg = config.raster.background_color;
    let mut g = initialize_from_views(train, config.gaussians, config.seed)?;
    let lrs = [
        config.lr_position,
        config.lr_color,
        config.lr_rotation,
        config.lr_scale,
        config.lr_opacity,
        config.lr_semantic,
    ];
    let mut opts: Vec<OptimizerState> = (0..6).map(|_| OptimizerState::new(OptimizerConfig::adam(1.0))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut last = 0.0;
    for it in 0..config.iterations {
        let scene = g.to_scene(bg)?;
        let picks: Vec<usize> = (0..config.views_per_step).map(|_| rng.gen_range(0..train.len())).collect();
        let nv = picks.len() as f64;
        let per_view = picks
            .par_iter()
            .map(|&v| -> Result<_> {
                let view = &train[v];
                let out = render(&scene, &view.camera, &config.raster)?;
                let (geo, g_rgb) = mse_with_grad(&out.rgb, &view.rgb)?;
                let (sem, g_sem) = cosine_with_grad(&out.feature, &view.semantic)?;
                let mut up = ImageBundle::zeros(view.camera.width, view.camera.height);
                up.rgb.data = g_rgb.data.iter().map(|x| x / nv).collect();
                up.feature.data = g_sem.data.iter().map(|x| x * config.semantic_weight / nv).collect();
                let grads = render_backward(&scene, &view.camera, &config.raster, &up)?;
                Ok((geo + config.semantic_weight * sem, grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = g.clone();
        for f in grads.fields.iter_mut() {
            f.data.fill(0.0);
        }
        last = 0.0;
        for (loss, pg) in &per_view {
            last += loss / nv;
            for (i, p) in pg.iter().enumerate() {
                let f = &mut grads.fields;
                for k in 0..3 {
                    f[POS].data[3 * i + k] += p.position[k];
                    f[SEM].data[3 * i + k] += p.semantic[k];
                }
                for k in 0..SH_COEFFS {
                    f[SH].data[SH_COEFFS * i + k] += p.sh_coeffs[k];
                }
                let raw = &g.fields[ROT].data[4 * i..4 * i + 4];
                let gq = normalize_quat_backward(&[raw[0], raw[1], raw[2], raw[3]], &p.rotation);
                for k in 0..4 {
                    f[ROT].data[4 * i + k] += gq[k];
                }
                let prim = &scene.primitives[i];
                for k in 0..3 {
                    let ls = g.fields[LOG_SCALE].data[3 * i + k];
                    if ls > MIN_LOG_SCALE {
                        f[LOG_SCALE].data[3 * i + k] += p.scale[k] * prim.scale()[k];
                    }
                }
                let o = prim.opacity();
                f[LOGIT].data[i] += p.opacity * o * (1.0 - o);
            }
        }
        let progress = it as f64 / config.iterations.max(1) as f64;
        for k in 0..6 {
            let lr = lrs[k] * config.lr_final_fraction.powf(progress);
            opts[k].step(&mut g.fields[k], &grads.fields[k], lr, &|_| false)?;
        }
    }
    let scene = g.to_scene(bg)?;
    let held_out_psnr = held_out
        .par_iter()
        .map(|v| psnr(&render(&scene, &v.camera, &config.raster)?.rgb, &v.rgb))
        .collect::<Result<Vec<_>>>()?;
    let mean = if held_out_psnr.is_empty() {
        f64::NAN
    } else {
        held_out_psnr.iter().sum::<f64>() / held_out_psnr.len() as f64
    };
    Ok((
        scene,
        FitReport {
            iterations: config.iterations,
            final_train_loss: last,
            held_out_psnr,
            mean_held_out_psnr: mean,
        },
    ))
}

/// Ray-cast views of a world state from a supervision ring, split so that
/// every fifth camera is held out.
pub fn ring_views(state: &WorldState, cameras: usize, width: usize, height: usize) -> Result<(Vec<View>, Vec<View>)> {
    let rig = CameraRig::new(width, height, cameras)?;
    let views: Vec<View> = rig
        .supervision
        .par_iter()
        .map(|cam| {
            let r = raycast_render(state, cam);
            View {
                camera: cam.clone(),
                rgb: r.rgb,
                depth: r.depth,
                semantic: r.semantic,
            }
        })
        .collect();
    let (held, train): (Vec<_>, Vec<_>) = views.into_iter().enumerate().partition(|(i, _)| i % 5 == 4);
    Ok((
        train.into_iter().map(|(_, v)| v).collect(),
        held.into_iter().map(|(_, v)| v).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::default_scene;

    #[test]
    fn ring_split_is_four_to_one() {
        let (train, held) = ring_views(&default_scene(), 20, 16, 16).unwrap();
        assert_eq!((train.len(), held.len()), (16, 4));
    }

    #[test]
    fn free_gaussians_roundtrip_through_primitives() {
        let (train, _) = ring_views(&default_scene(), 5, 16, 16).unwrap();
        let g = initialize_from_views(&train, 50, 3).unwrap();
        let scene = g.to_scene(Vector3::zeros()).unwrap();
        let back = FreeGaussians::from_primitives(&scene.primitives);
        for (a, b) in g.fields.iter().zip(&back.fields) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-9, "{}", a.name);
            }
        }
    }

    #[test]
    fn short_fit_improves_held_out_views() {
        let (train, held) = ring_views(&default_scene(), 10, 24, 24).unwrap();
        let short = FitConfig {
            gaussians: 300,
            iterations: 1,
            ..FitConfig::default()
        };
        let (_, before) = fit_views(&train, &held, &short).unwrap();
        let (_, after) = fit_views(&train, &held, &FitConfig { iterations: 150, ..short }).unwrap();
        assert!(after.mean_held_out_psnr > before.mean_held_out_psnr + 1.0, "{before:?} {after:?}");
    }
}
