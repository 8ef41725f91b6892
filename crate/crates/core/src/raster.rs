//! Tile-based splatting of a [`DynamicScene`] into RGB, feature, depth and
//! alpha images, plus the matching reverse pass.
//!
//! Gaussians are sorted once, globally, by camera-space depth (ties broken by
//! primitive index). Each tile receives the sorted subset whose footprint
//! touches it and composites its pixels front to back. Per-pixel work is
//! sequential, so the output does not depend on how tiles are scheduled.
//!
//! The footprint radius is derived from `alpha_threshold`: every pixel outside
//! it would have been skipped by the threshold anyway, so tiling never changes
//! the composited values. With the threshold at zero every Gaussian touches
//! every tile.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::gaussian::{
    normalize_quat_backward, quat_norm, rotation_matrix, rotation_matrix_backward, sh_basis, DynamicScene,
    GaussianPrimitive, SH_C1, SH_COEFFS, SH_PER_CHANNEL,
};
use crate::error::{Error, Result};
use crate::image::ImageBundle;

/// Determinants below this mark a footprint as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSettings {
    pub tile_size: usize,
    /// Contributions with a smaller alpha are skipped.
    pub alpha_threshold: f64,
    /// Compositing stops once transmittance falls below this.
    pub transmittance_floor: f64,
    pub background_color: Vector3<f64>,
    /// Isotropic variance (px²) added to every projected covariance.
    pub low_pass: f64,
    pub alpha_clip: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_threshold: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            background_color: Vector3::zeros(),
            low_pass: 0.3,
            alpha_clip: 0.99,
        }
    }
}

impl RasterSettings {
    /// Thresholds disabled: every contribution is composited, no early stop.
    pub fn exact() -> Self {
        Self {
            alpha_threshold: 0.0,
            transmittance_floor: 0.0,
            ..Self::default()
        }
    }

    pub fn with_background(mut self, background: Vector3<f64>) -> Self {
        self.background_color = background;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidParameter("tile_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.alpha_threshold) || !(0.0..1.0).contains(&self.transmittance_floor) {
            return Err(Error::InvalidParameter("raster thresholds must lie in [0, 1)".into()));
        }
        if !(self.alpha_clip > self.alpha_threshold && self.alpha_clip < 1.0) {
            return Err(Error::InvalidParameter("alpha_clip must lie in (alpha_threshold, 1)".into()));
        }
        if !(self.low_pass >= 0.0) || !self.background_color.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("invalid low-pass or background".into()));
        }
        Ok(())
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: [f64; 2],
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

/// Projects one primitive with the default settings. Returns `None` when the
/// primitive is outside the clip range, singular, or its footprint misses the
/// image.
pub fn project_gaussian(p: &GaussianPrimitive, cam: &Camera) -> Option<ProjectedGaussian> {
    let settings = RasterSettings::default();
    match project_splat(0, p, cam, &settings) {
        Projection::Visible(s) => Some(ProjectedGaussian {
            mean2d: s.mean,
            cov2d: Matrix2::new(s.cov[0], s.cov[1], s.cov[1], s.cov[2]),
            depth: s.depth,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub visible: usize,
    pub culled: usize,
    pub singular: usize,
}

/// Gradient of a scalar loss with respect to every field of one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveGrad {
    pub position: Vector3<f64>,
    pub sh_coeffs: [f64; SH_COEFFS],
    pub rotation: [f64; 4],
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub semantic: Vector3<f64>,
}

impl Default for PrimitiveGrad {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            sh_coeffs: [0.0; SH_COEFFS],
            rotation: [0.0; 4],
            scale: Vector3::zeros(),
            opacity: 0.0,
            semantic: Vector3::zeros(),
        }
    }
}

impl PrimitiveGrad {
    pub fn add_assign(&mut self, other: &PrimitiveGrad) {
        self.position += other.position;
        for (a, b) in self.sh_coeffs.iter_mut().zip(&other.sh_coeffs) {
            *a += b;
        }
        for (a, b) in self.rotation.iter_mut().zip(&other.rotation) {
            *a += b;
        }
        self.scale += other.scale;
        self.opacity += other.opacity;
        self.semantic += other.semantic;
    }

    pub fn is_zero(&self) -> bool {
        self.position.iter().all(|&v| v == 0.0)
            && self.sh_coeffs.iter().all(|&v| v == 0.0)
            && self.rotation.iter().all(|&v| v == 0.0)
            && self.scale.iter().all(|&v| v == 0.0)
            && self.opacity == 0.0
            && self.semantic.iter().all(|&v| v == 0.0)
    }
}

// ---------------------------------------------------------------------------
// projection

#[derive(Debug, Clone)]
struct Splat {
    index: usize,
    mean: [f64; 2],
    /// (xx, xy, yy) of the screen covariance, low-pass included.
    cov: [f64; 3],
    /// (xx, xy, yy) of the inverse covariance.
    conic: [f64; 3],
    depth: f64,
    opacity: f64,
    color: [f64; 3],
    color_raw: [f64; 3],
    feature: [f64; 3],
    /// Inclusive pixel bounds of the footprint.
    px_min: [usize; 2],
    px_max: [usize; 2],
    p_cam: Vector3<f64>,
    t_mat: Matrix2x3<f64>,
    sigma: Matrix3<f64>,
    rot: Matrix3<f64>,
    quat_unit: [f64; 4],
    view_offset: Vector3<f64>,
}

enum Projection {
    Visible(Box<Splat>),
    Culled,
    Singular,
}

fn project_splat(index: usize, p: &GaussianPrimitive, cam: &Camera, settings: &RasterSettings) -> Projection {
    let w = cam.rotation_matrix();
    let p_cam = w * p.position() + cam.translation_vector();
    let z = p_cam.z;
    if !(z > cam.near && z < cam.far) {
        return Projection::Culled;
    }
    let (x, y) = (p_cam.x, p_cam.y);
    let mean = [cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy];
    let jac = Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * y / (z * z),
    );
    let t_mat = jac * w;

    // primitives keep unit quaternions; normalizing again keeps the
    // derivative consistent for raw perturbations
    let q = *p.rotation();
    let n = quat_norm(&q);
    let quat_unit = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let rot = rotation_matrix(&quat_unit);
    let m = rot * Matrix3::from_diagonal(p.scale());
    let sigma = m * m.transpose();
    let cov_m = t_mat * sigma * t_mat.transpose();
    let cov = [
        cov_m[(0, 0)] + settings.low_pass,
        0.5 * (cov_m[(0, 1)] + cov_m[(1, 0)]),
        cov_m[(1, 1)] + settings.low_pass,
    ];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det >= SINGULAR_DET) {
        return Projection::Singular;
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];

    let opacity = p.opacity();
    let max_alpha = opacity.min(settings.alpha_clip);
    let (px_min, px_max) = if settings.alpha_threshold > 0.0 {
        if max_alpha < settings.alpha_threshold {
            return Projection::Culled;
        }
        let extent = (2.0 * (opacity / settings.alpha_threshold).ln()).max(0.0).sqrt();
        let mid = 0.5 * (cov[0] + cov[2]);
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        let radius = extent * lambda_max.sqrt();
        let lo_x = (mean[0] - radius).ceil().max(0.0);
        let lo_y = (mean[1] - radius).ceil().max(0.0);
        let hi_x = (mean[0] + radius).floor().min(cam.width as f64 - 1.0);
        let hi_y = (mean[1] + radius).floor().min(cam.height as f64 - 1.0);
        if !(lo_x <= hi_x && lo_y <= hi_y) {
            return Projection::Culled;
        }
        ([lo_x as usize, lo_y as usize], [hi_x as usize, hi_y as usize])
    } else {
        ([0, 0], [cam.width - 1, cam.height - 1])
    };

    let view_offset = p.position() - cam.center();
    let view_dir = view_offset / view_offset.norm();
    let basis = sh_basis(&view_dir);
    let sh = p.sh_coeffs();
    let mut color_raw = [0.5; 3];
    for (ch, c) in color_raw.iter_mut().enumerate() {
        for l in 0..SH_PER_CHANNEL {
            *c += sh[ch * SH_PER_CHANNEL + l] * basis[l];
        }
    }
    let color = color_raw.map(|c| c.max(0.0));
    let f = p.semantic();

    Projection::Visible(Box::new(Splat {
        index,
        mean,
        cov,
        conic,
        depth: z,
        opacity,
        color,
        color_raw,
        feature: [f.x, f.y, f.z],
        px_min,
        px_max,
        p_cam,
        t_mat,
        sigma,
        rot,
        quat_unit,
        view_offset,
    }))
}

struct Prepared {
    splats: Vec<Splat>,
    tiles_x: usize,
    /// Per tile, indices into `splats` in front-to-back order.
    tile_lists: Vec<Vec<u32>>,
    stats: RenderStats,
}

fn prepare(scene: &DynamicScene, cam: &Camera, settings: &RasterSettings) -> Result<Prepared> {
    cam.validate()?;
    settings.validate()?;
    let mut stats = RenderStats::default();
    let projections: Vec<Projection> = scene
        .primitives
        .par_iter()
        .enumerate()
        .map(|(i, p)| project_splat(i, p, cam, settings))
        .collect();
    let mut splats = Vec::with_capacity(projections.len());
    for proj in projections {
        match proj {
            Projection::Visible(s) => splats.push(*s),
            Projection::Culled => stats.culled += 1,
            Projection::Singular => stats.singular += 1,
        }
    }
    stats.visible = splats.len();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let ts = settings.tile_size;
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let mut tile_lists = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, s) in splats.iter().enumerate() {
        for ty in s.px_min[1] / ts..=s.px_max[1] / ts {
            for tx in s.px_min[0] / ts..=s.px_max[0] / ts {
                tile_lists[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }
    Ok(Prepared {
        splats,
        tiles_x,
        tile_lists,
        stats,
    })
}

// ---------------------------------------------------------------------------
// compositing

#[derive(Clone, Copy)]
struct Contribution {
    /// Position in the tile list.
    pos: u32,
    slot: u32,
    alpha: f64,
    transmittance: f64,
    gauss: f64,
    clipped: bool,
    dx: f64,
    dy: f64,
}

/// Walks the sorted list for one pixel, calling `visit` for every composited
/// contribution. Returns the final transmittance.
#[inline]
fn composite_pixel(
    px: f64,
    py: f64,
    list: &[u32],
    splats: &[Splat],
    settings: &RasterSettings,
    mut visit: impl FnMut(Contribution),
) -> f64 {
    let mut t = 1.0;
    for (pos, &slot) in list.iter().enumerate() {
        let s = &splats[slot as usize];
        let dx = px - s.mean[0];
        let dy = py - s.mean[1];
        let power = -0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
        let gauss = power.exp();
        let raw = s.opacity * gauss;
        let clipped = raw > settings.alpha_clip;
        let alpha = if clipped { settings.alpha_clip } else { raw };
        if alpha < settings.alpha_threshold {
            continue;
        }
        visit(Contribution {
            pos: pos as u32,
            slot,
            alpha,
            transmittance: t,
            gauss,
            clipped,
            dx,
            dy,
        });
        t *= 1.0 - alpha;
        if t < settings.transmittance_floor {
            break;
        }
    }
    t
}

struct TilePixels {
    rgb: Vec<[f64; 3]>,
    feature: Vec<[f64; 3]>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
}

fn tile_bounds(tile: usize, prep: &Prepared, cam: &Camera, ts: usize) -> (usize, usize, usize, usize) {
    let tx = tile % prep.tiles_x;
    let ty = tile / prep.tiles_x;
    let x0 = tx * ts;
    let y0 = ty * ts;
    (x0, y0, (x0 + ts).min(cam.width), (y0 + ts).min(cam.height))
}

/// Renders `scene` from `cam`.
pub fn render(scene: &DynamicScene, cam: &Camera, settings: &RasterSettings) -> Result<ImageBundle> {
    render_with_stats(scene, cam, settings).map(|(bundle, _)| bundle)
}

pub fn render_with_stats(
    scene: &DynamicScene,
    cam: &Camera,
    settings: &RasterSettings,
) -> Result<(ImageBundle, RenderStats)> {
    let prep = prepare(scene, cam, settings)?;
    let ts = settings.tile_size;
    let bg = settings.background_color;
    let tiles: Vec<TilePixels> = (0..prep.tile_lists.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = tile_bounds(tile, &prep, cam, ts);
            let list = &prep.tile_lists[tile];
            let n = (x1 - x0) * (y1 - y0);
            let mut out = TilePixels {
                rgb: Vec::with_capacity(n),
                feature: Vec::with_capacity(n),
                depth: Vec::with_capacity(n),
                alpha: Vec::with_capacity(n),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let mut rgb = [0.0; 3];
                    let mut feat = [0.0; 3];
                    let mut depth = 0.0;
                    let t = composite_pixel(x as f64, y as f64, list, &prep.splats, settings, |c| {
                        let s = &prep.splats[c.slot as usize];
                        let w = c.alpha * c.transmittance;
                        for k in 0..3 {
                            rgb[k] += w * s.color[k];
                            feat[k] += w * s.feature[k];
                        }
                        depth += w * s.depth;
                    });
                    for k in 0..3 {
                        rgb[k] += t * bg[k];
                    }
                    out.rgb.push(rgb);
                    out.feature.push(feat);
                    out.depth.push(depth);
                    out.alpha.push(1.0 - t);
                }
            }
            out
        })
        .collect();

    let mut bundle = ImageBundle::zeros(cam.width, cam.height);
    for (tile, px) in tiles.iter().enumerate() {
        let (x0, y0, x1, y1) = tile_bounds(tile, &prep, cam, ts);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                bundle.rgb.pixel_mut(x, y).copy_from_slice(&px.rgb[k]);
                bundle.feature.pixel_mut(x, y).copy_from_slice(&px.feature[k]);
                bundle.depth.pixel_mut(x, y)[0] = px.depth[k];
                bundle.alpha.pixel_mut(x, y)[0] = px.alpha[k];
                k += 1;
            }
        }
    }
    Ok((bundle, prep.stats))
}

// ---------------------------------------------------------------------------
// reverse pass

#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    color: [f64; 3],
    opacity: f64,
    feature: [f64; 3],
    depth: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
            self.feature[k] += o.feature[k];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

/// Reverse-mode derivatives of `render` given per-pixel upstream gradients
/// laid out exactly like the forward output. Skipped, clipped and
/// early-terminated contributions receive zero gradient, as in the forward.
pub fn render_backward(
    scene: &DynamicScene,
    cam: &Camera,
    settings: &RasterSettings,
    upstream: &ImageBundle,
) -> Result<Vec<PrimitiveGrad>> {
    upstream.check_shape(cam.width, cam.height)?;
    let prep = prepare(scene, cam, settings)?;
    let ts = settings.tile_size;
    let bg = settings.background_color;

    let tile_grads: Vec<Vec<ScreenGrad>> = (0..prep.tile_lists.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = tile_bounds(tile, &prep, cam, ts);
            let list = &prep.tile_lists[tile];
            let mut local = vec![ScreenGrad::default(); list.len()];
            let mut contribs: Vec<Contribution> = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let d_rgb = upstream.rgb.pixel(x, y);
                    let d_feat = upstream.feature.pixel(x, y);
                    let d_depth = upstream.depth.pixel(x, y)[0];
                    let d_alpha = upstream.alpha.pixel(x, y)[0];
                    if d_rgb.iter().chain(d_feat).all(|&v| v == 0.0) && d_depth == 0.0 && d_alpha == 0.0 {
                        continue;
                    }
                    contribs.clear();
                    let t_final =
                        composite_pixel(x as f64, y as f64, list, &prep.splats, settings, |c| contribs.push(c));
                    // gradient flowing into the final transmittance
                    let d_tfinal = d_rgb[0] * bg[0] + d_rgb[1] * bg[1] + d_rgb[2] * bg[2] - d_alpha;
                    let mut suffix = t_final * d_tfinal;
                    for c in contribs.iter().rev() {
                        let s = &prep.splats[c.slot as usize];
                        let w = c.alpha * c.transmittance;
                        let value = s.color[0] * d_rgb[0]
                            + s.color[1] * d_rgb[1]
                            + s.color[2] * d_rgb[2]
                            + s.feature[0] * d_feat[0]
                            + s.feature[1] * d_feat[1]
                            + s.feature[2] * d_feat[2]
                            + s.depth * d_depth;
                        let d_alpha_i = c.transmittance * value - suffix / (1.0 - c.alpha);
                        suffix += w * value;

                        let g = &mut local[c.pos as usize];
                        for k in 0..3 {
                            g.color[k] += w * d_rgb[k];
                            g.feature[k] += w * d_feat[k];
                        }
                        g.depth += w * d_depth;
                        if !c.clipped {
                            g.opacity += c.gauss * d_alpha_i;
                            let d_power = s.opacity * d_alpha_i * c.gauss;
                            g.conic[0] += -0.5 * c.dx * c.dx * d_power;
                            g.conic[1] += -c.dx * c.dy * d_power;
                            g.conic[2] += -0.5 * c.dy * c.dy * d_power;
                            g.mean[0] += d_power * (s.conic[0] * c.dx + s.conic[1] * c.dy);
                            g.mean[1] += d_power * (s.conic[1] * c.dx + s.conic[2] * c.dy);
                        }
                    }
                }
            }
            local
        })
        .collect();

    // deterministic reduction in tile order
    let mut screen = vec![ScreenGrad::default(); prep.splats.len()];
    for (tile, grads) in tile_grads.iter().enumerate() {
        for (g, &slot) in grads.iter().zip(&prep.tile_lists[tile]) {
            screen[slot as usize].add(g);
        }
    }

    let mut out = vec![PrimitiveGrad::default(); scene.primitives.len()];
    let per_splat: Vec<(usize, PrimitiveGrad)> = prep
        .splats
        .par_iter()
        .zip(screen.par_iter())
        .map(|(s, g)| (s.index, splat_backward(s, g, cam, &scene.primitives[s.index])))
        .collect();
    for (index, g) in per_splat {
        out[index] = g;
    }
    Ok(out)
}

fn splat_backward(s: &Splat, g: &ScreenGrad, cam: &Camera, p: &GaussianPrimitive) -> PrimitiveGrad {
    let mut out = PrimitiveGrad {
        opacity: g.opacity,
        semantic: Vector3::from(g.feature),
        ..PrimitiveGrad::default()
    };

    // conic -> screen covariance: dL/dCov = -Q G Q
    let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let g_q = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov = -(q * g_q * q);
    // cov = T Σ Tᵀ + εI
    let g_sigma = s.t_mat.transpose() * g_cov * s.t_mat;
    let g_t = 2.0 * g_cov * s.t_mat * s.sigma;
    let w = cam.rotation_matrix();
    let g_jac = g_t * w.transpose();

    let (x, y, z) = (s.p_cam.x, s.p_cam.y, s.p_cam.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let z2 = z * z;
    let z3 = z2 * z;
    let mut d_cam = Vector3::zeros();
    // Jacobian entries depend on the camera-space mean
    d_cam.x += g_jac[(0, 2)] * (-fx / z2);
    d_cam.y += g_jac[(1, 2)] * (-fy / z2);
    d_cam.z += g_jac[(0, 0)] * (-fx / z2)
        + g_jac[(0, 2)] * (2.0 * fx * x / z3)
        + g_jac[(1, 1)] * (-fy / z2)
        + g_jac[(1, 2)] * (2.0 * fy * y / z3);
    // screen-space mean
    d_cam.x += g.mean[0] * fx / z;
    d_cam.y += g.mean[1] * fy / z;
    d_cam.z += -g.mean[0] * fx * x / z2 - g.mean[1] * fy * y / z2;
    d_cam.z += g.depth;
    out.position = w.transpose() * d_cam;

    // color through SH and the view direction
    let view_len = s.view_offset.norm();
    let dir = s.view_offset / view_len;
    let basis = sh_basis(&dir);
    let sh = p.sh_coeffs();
    let mut d_basis = [0.0; SH_PER_CHANNEL];
    for ch in 0..3 {
        if s.color_raw[ch] <= 0.0 {
            continue;
        }
        let d_raw = g.color[ch];
        for l in 0..SH_PER_CHANNEL {
            out.sh_coeffs[ch * SH_PER_CHANNEL + l] = d_raw * basis[l];
            d_basis[l] += d_raw * sh[ch * SH_PER_CHANNEL + l];
        }
    }
    let d_dir = Vector3::new(-SH_C1 * d_basis[3], -SH_C1 * d_basis[1], SH_C1 * d_basis[2]);
    out.position += (d_dir - dir * dir.dot(&d_dir)) / view_len;

    // Σ = M Mᵀ with M = R S
    let scale = p.scale();
    let m = s.rot * Matrix3::from_diagonal(scale);
    let g_sigma_sym = 0.5 * (g_sigma + g_sigma.transpose());
    let g_m = 2.0 * g_sigma_sym * m;
    let mut g_rot = Matrix3::zeros();
    for r in 0..3 {
        for k in 0..3 {
            g_rot[(r, k)] = g_m[(r, k)] * scale[k];
            out.scale[k] += g_m[(r, k)] * s.rot[(r, k)];
        }
    }
    let g_unit = rotation_matrix_backward(&s.quat_unit, &g_rot);
    out.rotation = normalize_quat_backward(p.rotation(), &g_unit);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{sh_from_rgb, IDENTITY_QUAT};
    use approx::assert_abs_diff_eq;

    fn axis_camera(size: usize) -> Camera {
        Camera::identity(size, size, size as f64)
    }

    fn splat_at(pos: [f64; 3], rgb: [f64; 3], scale: f64, opacity: f64) -> GaussianPrimitive {
        GaussianPrimitive::isotropic(Vector3::from(pos), rgb, scale, opacity).unwrap()
    }

    #[test]
    fn projection_pinhole() {
        let cam = axis_camera(33);
        let p = splat_at([0.0, 0.0, 2.0], [0.5; 3], 0.05, 0.9);
        let proj = project_gaussian(&p, &cam).unwrap();
        assert_eq!(proj.mean2d, [cam.cx, cam.cy]);
        let p = splat_at([0.3, 0.0, 2.0], [0.5; 3], 0.05, 0.9);
        let proj = project_gaussian(&p, &cam).unwrap();
        assert_abs_diff_eq!(proj.mean2d[0], cam.fx * 0.3 / 2.0 + cam.cx, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.mean2d[1], cam.cy, epsilon = 1e-12);
        assert_eq!(proj.depth, 2.0);
    }

    #[test]
    fn projection_isotropic_covariance() {
        let cam = axis_camera(64);
        let (s, z) = (0.07, 1.7);
        let p = splat_at([0.0, 0.0, z], [0.5; 3], s, 0.9);
        let proj = project_gaussian(&p, &cam).unwrap();
        // oracle: J Σ Jᵀ at the axis point, written out by hand
        let j = [[cam.fx / z, 0.0, 0.0], [0.0, cam.fy / z, 0.0]];
        let mut expected = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..3 {
                    expected[a][b] += j[a][k] * s * s * j[b][k];
                }
            }
        }
        assert_abs_diff_eq!(proj.cov2d[(0, 0)], expected[0][0] + 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(proj.cov2d[(1, 1)], expected[1][1] + 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(proj.cov2d[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expected[0][0], (cam.fx * s / z).powi(2), epsilon = 1e-9);
    }

    #[test]
    fn projection_culls() {
        let cam = axis_camera(16);
        assert!(project_gaussian(&splat_at([0.0, 0.0, -1.0], [0.5; 3], 0.1, 0.9), &cam).is_none());
        assert!(project_gaussian(&splat_at([0.0, 0.0, 500.0], [0.5; 3], 0.1, 0.9), &cam).is_none());
        assert!(project_gaussian(&splat_at([50.0, 0.0, 1.0], [0.5; 3], 0.01, 0.9), &cam).is_none());
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = axis_camera(20);
        let bg = Vector3::new(0.1, 0.2, 0.3);
        let scene = DynamicScene::new(vec![], bg);
        let out = render(&scene, &cam, &RasterSettings::default().with_background(bg)).unwrap();
        for px in out.rgb.pixels() {
            assert_eq!(px, &[0.1, 0.2, 0.3]);
        }
        assert!(out.alpha.data.iter().all(|&a| a == 0.0));
        assert!(out.depth.data.iter().all(|&a| a == 0.0));
        assert!(out.feature.data.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn alpha_at_mean_equals_opacity() {
        let cam = axis_camera(33);
        let scene = DynamicScene::new(vec![splat_at([0.0, 0.0, 2.0], [0.5; 3], 0.1, 0.6)], Vector3::zeros());
        let out = render(&scene, &cam, &RasterSettings::default()).unwrap();
        assert_abs_diff_eq!(out.alpha.pixel(16, 16)[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn two_layer_composite() {
        let cam = axis_camera(33);
        let front = splat_at([0.0, 0.0, 2.0], [1.0, 0.0, 0.0], 0.1, 0.6);
        let back = splat_at([0.0, 0.0, 3.0], [0.0, 1.0, 0.0], 0.2, 0.7);
        // listed back first; sorting must fix the order
        let scene = DynamicScene::new(vec![back, front], Vector3::zeros());
        let settings = RasterSettings::exact();
        let out = render(&scene, &cam, &settings).unwrap();
        // oracle: both Gaussians are centered on this pixel
        let (a1, a2) = (0.6, 0.7);
        let px = out.rgb.pixel(16, 16);
        assert_abs_diff_eq!(px[0], a1, epsilon = 1e-12);
        assert_abs_diff_eq!(px[1], a2 * (1.0 - a1), epsilon = 1e-12);
        assert_abs_diff_eq!(out.depth.pixel(16, 16)[0], 2.0 * a1 + 3.0 * a2 * (1.0 - a1), epsilon = 1e-12);
    }

    #[test]
    fn singular_footprints_are_counted() {
        let cam = axis_camera(16);
        let p = GaussianPrimitive::new(
            Vector3::new(0.0, 0.0, 2.0),
            sh_from_rgb([0.5; 3]),
            IDENTITY_QUAT,
            Vector3::repeat(1e-9),
            0.5,
            Vector3::zeros(),
        )
        .unwrap();
        let scene = DynamicScene::new(vec![p], Vector3::zeros());
        let settings = RasterSettings {
            low_pass: 0.0,
            ..RasterSettings::default()
        };
        let (out, stats) = render_with_stats(&scene, &cam, &settings).unwrap();
        assert_eq!(stats.singular, 1);
        assert!(out.alpha.data.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cam = axis_camera(24);
        let scene = DynamicScene::new(
            vec![
                splat_at([0.0, 0.1, 2.0], [0.9, 0.2, 0.1], 0.2, 0.6),
                splat_at([0.1, 0.0, 2.5], [0.1, 0.2, 0.9], 0.3, 0.8),
            ],
            Vector3::zeros(),
        );
        let grads = render_backward(&scene, &cam, &RasterSettings::default(), &ImageBundle::zeros(24, 24)).unwrap();
        assert!(grads.iter().all(PrimitiveGrad::is_zero));
    }

    #[test]
    fn backward_shape_mismatch() {
        let cam = axis_camera(24);
        let scene = DynamicScene::new(vec![], Vector3::zeros());
        let err = render_backward(&scene, &cam, &RasterSettings::default(), &ImageBundle::zeros(8, 8));
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}
