//! The Gaussian world model: an RGB-D view is lifted into voxels, each
//! occupied voxel gets a feature and a Gaussian, an action-conditioned network
//! moves the Gaussians one step forward, and both steps are rendered.
//!
//! Every stage has a hand-written reverse pass; [`WorldModel::loss_and_grad`]
//! chains them into gradients for all four networks.

mod voxel;

pub use voxel::{encoder_input_width, positional_encoding, voxelize, Observation, VoxelGrid, VOXEL_CHANNELS};

use nalgebra::Vector3;
use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{unflatten_index, ActionLogits, DiscreteAction, Workspace, ROTATION_BINS};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{
    normalize_quat, normalize_quat_backward, propagate, sh_from_rgb, DeformationDelta, DynamicScene,
    GaussianPrimitive, IDENTITY_QUAT, SH_COEFFS,
};
use crate::image::{Image, ImageBundle};
use crate::losses::{action_loss_with_grad, cosine_with_grad, mse_with_grad, LossComponents};
use crate::nn::{join, sigmoid, Activation, DenseLayer, Mlp, MlpCache, Params};
use crate::persistence::NamedTensor;
use crate::raster::{render, render_backward, PrimitiveGrad, RasterSettings};
use crate::synthetic::{Task, BACKGROUND_RGB};

/// Raw regressor outputs per voxel: offset, SH, rotation, log-scale,
/// opacity logit, semantic.
pub const REGRESSOR_OUTPUTS: usize = 26;
const OFF: usize = 0;
const SH: usize = 3;
const ROT: usize = 15;
const SCALE: usize = 19;
const OPACITY: usize = 22;
const SEM: usize = 23;

/// Position, rotation, feature, action code.
pub const ACTION_EMBEDDING: usize = 8;
pub const DEFORMATION_OUTPUTS: usize = 7;
pub const MIN_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldModelConfig {
    pub workspace: Workspace,
    pub voxel_resolution: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub decoder_hidden: usize,
    pub max_gaussians: usize,
    pub pe_frequencies: usize,
    /// Initial value of the learnable position gain, in meters.
    pub deform_gain_init: f64,
    /// Seed of the subsampling draw when there are more voxels than
    /// `max_gaussians`.
    pub subsample_seed: u64,
    pub raster: RasterSettings,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            voxel_resolution: 20,
            feature_dim: 64,
            hidden_dim: 64,
            decoder_hidden: 128,
            max_gaussians: 16384,
            pe_frequencies: 4,
            deform_gain_init: 0.04,
            subsample_seed: 0,
            raster: RasterSettings::default().with_background(Vector3::from(BACKGROUND_RGB)),
        }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.workspace.validate()?;
        self.raster.validate()?;
        for (name, v) in [
            ("voxel_resolution", self.voxel_resolution),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("max_gaussians", self.max_gaussians),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.deform_gain_init.is_finite()) {
            return Err(Error::Config("deform_gain_init must be finite".into()));
        }
        Ok(())
    }

    pub fn translation_bins(&self) -> usize {
        self.voxel_resolution.pow(3)
    }

    pub fn decoder_outputs(&self) -> usize {
        self.translation_bins() + 3 * ROTATION_BINS + 4
    }
}

/// Weights of all four networks.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModelParams {
    pub encoder: Mlp,
    pub regressor: Mlp,
    pub deformation: Mlp,
    /// Scales the position part of the deformation output.
    pub deform_gain: [f64; 1],
    pub decoder: Mlp,
}

/// True for tensors of the deformation predictor, which stay frozen during
/// warm-up.
pub fn is_deformation_param(name: &str) -> bool {
    name.starts_with("deformation.")
}

/// Output layer of the deformation network. Rotation rows start small so
/// early predictions barely turn anything; the layer is not zero because a
/// zero tensor hardly moves under layer-wise trust-ratio updates.
fn deformation_head(hidden: usize, rng: &mut ChaCha8Rng) -> DenseLayer {
    let mut head = DenseLayer::new(hidden, DEFORMATION_OUTPUTS, Activation::Identity, rng);
    head.weights.slice_mut(s![3.., ..]).mapv_inplace(|w| 0.1 * w);
    head
}

impl WorldModelParams {
    pub fn new(config: &WorldModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.feature_dim;
        let h = config.hidden_dim;
        let encoder = Mlp::from_widths(
            &[encoder_input_width(config.pe_frequencies), d, d],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        let mut regressor = Mlp::from_widths(&[d, h, REGRESSOR_OUTPUTS], Activation::Relu, Activation::Identity, &mut rng);
        {
            let head = regressor.layers.last_mut().expect("two layers");
            head.bias[ROT] = 1.0;
            let pitch = config.workspace.pitch(config.voxel_resolution).min();
            for k in 0..3 {
                head.bias[SCALE + k] = (0.5 * pitch).ln();
            }
        }
        let width = d + 7 + ACTION_EMBEDDING;
        let deformation = Mlp::new(
            vec![
                DenseLayer::new(width, h, Activation::Relu, &mut rng),
                DenseLayer::new(h, h, Activation::Relu, &mut rng),
                deformation_head(h, &mut rng),
            ],
            vec![(0, 1)],
        )?;
        let decoder = Mlp::from_widths(
            &[2 * d + 7, config.decoder_hidden, config.decoder_hidden, config.decoder_outputs()],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        Ok(Self {
            encoder,
            regressor,
            deformation,
            deform_gain: [config.deform_gain_init],
            decoder,
        })
    }

    pub fn deformation_param_count(&self) -> usize {
        self.deformation.param_count() + 1
    }

    /// Named tensors in visiting order, for checkpoints.
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit("", &mut |name, shape, data| {
            out.push(NamedTensor {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: data.to_vec(),
            })
        });
        out
    }

    /// Overwrites every tensor; names and shapes must match exactly.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let specs = self.tensor_specs("");
        if specs.len() != tensors.len() {
            return Err(Error::shape("checkpoint tensors", specs.len(), tensors.len()));
        }
        for ((name, shape), t) in specs.iter().zip(tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(
                    "checkpoint tensor",
                    format!("{name} {shape:?}"),
                    format!("{} {:?}", t.name, t.shape),
                ));
            }
        }
        let mut i = 0;
        self.visit_mut("", &mut |_, data| {
            data.copy_from_slice(&tensors[i].data);
            i += 1;
        });
        Ok(())
    }
}

impl Params for WorldModelParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.regressor.visit(&join(prefix, "regressor"), f);
        self.deformation.visit(&join(prefix, "deformation"), f);
        f(&join(prefix, "deformation.gain"), &[1], &self.deform_gain);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.regressor.visit_mut(&join(prefix, "regressor"), f);
        self.deformation.visit_mut(&join(prefix, "deformation"), f);
        f(&join(prefix, "deformation.gain"), &mut self.deform_gain);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }

    fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            regressor: self.regressor.zeros_like(),
            deformation: self.deformation.zeros_like(),
            deform_gain: [0.0],
            decoder: self.decoder.zeros_like(),
        }
    }
}

/// One feature row per occupied voxel, rows in ascending flat-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub resolution: usize,
    pub workspace: Workspace,
    pub indices: Vec<usize>,
    /// Voxel RGB as observed, used as the base color of each Gaussian.
    pub colors: Vec<[f64; 3]>,
    pub features: Array2<f64>,
}

impl FeatureVolume {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A regressed scene and, for each primitive, the volume row it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressedScene {
    pub scene: DynamicScene,
    pub rows: Vec<usize>,
}

/// Outputs of a full forward rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub current: Vec<ImageBundle>,
    pub future: Vec<ImageBundle>,
    pub scene_t: DynamicScene,
    pub scene_t1: DynamicScene,
    pub deltas: Vec<DeformationDelta>,
    pub logits: ActionLogits,
}

/// Ground truth for one camera of a training transition.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionView {
    pub camera: Camera,
    pub rgb: Image,
    pub semantic: Image,
    pub future_rgb: Image,
}

/// One training example: observation at `t`, the expert action and the
/// views at `t` and `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub task: Task,
    pub observation: Observation,
    pub camera: Camera,
    pub action: DiscreteAction,
    pub views: Vec<SupervisionView>,
}

/// Scene-level loss terms and their gradients.
#[derive(Debug, Clone)]
pub struct SceneLosses {
    /// Unweighted `geo`, `sem`, `dyna` (averaged over views); `act` is zero.
    pub components: LossComponents,
    /// Gradient with respect to the primitives at `t`, including the path
    /// through propagation.
    pub grad_scene: Vec<PrimitiveGrad>,
    pub grad_deltas: Vec<DeformationDelta>,
}

/// Renders `scene_t` and its propagation under `deltas` from every view,
/// scores them, and back-propagates `Σ coeffs·term` to the primitives and the
/// deltas. A zero coefficient skips that term's reverse pass.
pub fn scene_losses(
    scene_t: &DynamicScene,
    deltas: &[DeformationDelta],
    views: &[SupervisionView],
    settings: &RasterSettings,
    coeffs: &LossComponents,
) -> Result<SceneLosses> {
    if views.is_empty() {
        return Err(Error::InvalidParameter("at least one supervision view is required".into()));
    }
    let scene_t1 = propagate(scene_t, deltas)?;
    let nv = views.len() as f64;
    let per_view: Vec<(LossComponents, Vec<PrimitiveGrad>, Vec<PrimitiveGrad>)> = views
        .par_iter()
        .map(|v| -> Result<_> {
            let (w, h) = (v.camera.width, v.camera.height);
            let now = render(scene_t, &v.camera, settings)?;
            let (geo, g_geo) = mse_with_grad(&now.rgb, &v.rgb)?;
            let (sem, g_sem) = cosine_with_grad(&now.feature, &v.semantic)?;
            let next = render(&scene_t1, &v.camera, settings)?;
            let (dyna, g_dyna) = mse_with_grad(&next.rgb, &v.future_rgb)?;
            let mut grad_t = Vec::new();
            if coeffs.geo != 0.0 || coeffs.sem != 0.0 {
                let mut up = ImageBundle::zeros(w, h);
                up.rgb = scaled(&g_geo, coeffs.geo / nv);
                up.feature = scaled(&g_sem, coeffs.sem / nv);
                grad_t = render_backward(scene_t, &v.camera, settings, &up)?;
            }
            let mut grad_t1 = Vec::new();
            if coeffs.dyna != 0.0 {
                let mut up = ImageBundle::zeros(w, h);
                up.rgb = scaled(&g_dyna, coeffs.dyna / nv);
                grad_t1 = render_backward(&scene_t1, &v.camera, settings, &up)?;
            }
            let c = LossComponents {
                act: 0.0,
                geo,
                sem,
                dyna,
            };
            Ok((c, grad_t, grad_t1))
        })
        .collect::<Result<_>>()?;

    let n = scene_t.len();
    let mut components = LossComponents::default();
    let mut grad_scene = vec![PrimitiveGrad::default(); n];
    let mut grad_next = vec![PrimitiveGrad::default(); n];
    for (c, gt, gt1) in &per_view {
        components = components.add(c);
        for (acc, g) in grad_scene.iter_mut().zip(gt) {
            acc.add_assign(g);
        }
        for (acc, g) in grad_next.iter_mut().zip(gt1) {
            acc.add_assign(g);
        }
    }
    components = components.scale(1.0 / nv);

    // propagate: position and rotation sums, other fields carried over
    let mut grad_deltas = vec![DeformationDelta::zero(); n];
    if coeffs.dyna != 0.0 {
        for i in 0..n {
            let g1 = &grad_next[i];
            let q = scene_t.primitives[i].rotation();
            let d = &deltas[i].d_rotation;
            let summed = [q[0] + d[0], q[1] + d[1], q[2] + d[2], q[3] + d[3]];
            let g_sum = normalize_quat_backward(&summed, &g1.rotation);
            // stored rotations are unit, so only the tangential part counts
            let carried = PrimitiveGrad {
                rotation: normalize_quat_backward(q, &g_sum),
                ..g1.clone()
            };
            grad_scene[i].add_assign(&carried);
            grad_deltas[i] = DeformationDelta {
                d_position: g1.position,
                d_rotation: g_sum,
            };
        }
    }
    Ok(SceneLosses {
        components,
        grad_scene,
        grad_deltas,
    })
}

fn scaled(img: &Image, s: f64) -> Image {
    Image {
        data: img.data.iter().map(|v| v * s).collect(),
        ..img.clone()
    }
}

struct EncodeTrace {
    cache: MlpCache,
}

struct RegressTrace {
    raw: Array2<f64>,
    cache: MlpCache,
    /// Whether each rotation came from the identity fallback.
    degenerate_rot: Vec<bool>,
}

struct DeformTrace {
    raw: Array2<f64>,
    cache: MlpCache,
}

struct DecodeTrace {
    cache: MlpCache,
    /// Row holding the maximum of each feature channel.
    argmax_rows: Vec<usize>,
}

/// Model configuration together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub config: WorldModelConfig,
    pub params: WorldModelParams,
}

impl WorldModel {
    pub fn new(config: WorldModelConfig, seed: u64) -> Result<Self> {
        let params = WorldModelParams::new(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn settings(&self) -> &RasterSettings {
        &self.config.raster
    }

    pub fn voxelize(&self, obs: &Observation, cam: &Camera) -> Result<VoxelGrid> {
        voxelize(obs, cam, &self.config.workspace, self.config.voxel_resolution)
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<FeatureVolume> {
        Ok(self.encode_traced(grid)?.0)
    }

    fn encode_traced(&self, grid: &VoxelGrid) -> Result<(FeatureVolume, EncodeTrace)> {
        let freq = self.config.pe_frequencies;
        let width = encoder_input_width(freq);
        let n = grid.occupied();
        let mut input = Vec::with_capacity(n * width);
        let mut indices = Vec::with_capacity(n);
        let mut colors = Vec::with_capacity(n);
        for (&flat, ch) in &grid.voxels {
            input.extend_from_slice(ch);
            positional_encoding([ch[3], ch[4], ch[5]], freq, &mut input);
            indices.push(flat);
            colors.push([ch[0], ch[1], ch[2]]);
        }
        let input = Array2::from_shape_vec((n, width), input).expect("encoder rows");
        let (features, cache) = self.params.encoder.forward(input.view())?;
        Ok((
            FeatureVolume {
                resolution: grid.resolution,
                workspace: grid.workspace,
                indices,
                colors,
                features,
            },
            EncodeTrace { cache },
        ))
    }

    /// Volume rows that become Gaussians: all of them, or a seeded uniform
    /// subset of `max_gaussians` rows kept in ascending order.
    pub fn select_rows(&self, count: usize) -> Vec<usize> {
        let cap = self.config.max_gaussians;
        if count <= cap {
            return (0..count).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.subsample_seed ^ count as u64);
        let mut rows = rand::seq::index::sample(&mut rng, count, cap).into_vec();
        rows.sort_unstable();
        rows
    }

    pub fn regress_gaussians(&self, vol: &FeatureVolume) -> Result<RegressedScene> {
        Ok(self.regress_traced(vol)?.0)
    }

    fn regress_traced(&self, vol: &FeatureVolume) -> Result<(RegressedScene, RegressTrace)> {
        if vol.is_empty() {
            return Err(Error::EmptyScene("no occupied voxels to regress".into()));
        }
        let rows = self.select_rows(vol.len());
        let mut input = Array2::zeros((rows.len(), vol.features.ncols()));
        for (r, &row) in rows.iter().enumerate() {
            input.row_mut(r).assign(&vol.features.row(row));
        }
        let (raw, cache) = self.params.regressor.forward(input.view())?;
        let pitch = vol.workspace.pitch(vol.resolution);
        let max_scale = 0.5 * vol.workspace.max_extent();
        let mut primitives = Vec::with_capacity(rows.len());
        let mut degenerate_rot = Vec::with_capacity(rows.len());
        for (r, &row) in rows.iter().enumerate() {
            let o = raw.row(r);
            let center = vol.workspace.voxel_center(unflatten_index(vol.indices[row], vol.resolution), vol.resolution);
            let offset = Vector3::new(
                pitch.x * o[OFF].tanh(),
                pitch.y * o[OFF + 1].tanh(),
                pitch.z * o[OFF + 2].tanh(),
            );
            let mut sh = sh_from_rgb(vol.colors[row]);
            for k in 0..SH_COEFFS {
                sh[k] += o[SH + k];
            }
            let raw_q = [o[ROT], o[ROT + 1], o[ROT + 2], o[ROT + 3]];
            let q = normalize_quat(raw_q);
            degenerate_rot.push(q.is_none());
            let scale = Vector3::new(o[SCALE], o[SCALE + 1], o[SCALE + 2]).map(|v| v.exp().clamp(MIN_SCALE, max_scale));
            let prim = GaussianPrimitive::new(
                center + offset,
                sh,
                q.unwrap_or(IDENTITY_QUAT),
                scale,
                sigmoid(o[OPACITY]),
                Vector3::new(o[SEM], o[SEM + 1], o[SEM + 2]),
            )?;
            primitives.push(prim);
        }
        let bg = self.config.raster.background_color;
        Ok((
            RegressedScene {
                scene: DynamicScene::new(primitives, bg),
                rows,
            },
            RegressTrace {
                raw,
                cache,
                degenerate_rot,
            },
        ))
    }

    fn deformation_input(&self, regressed: &RegressedScene, vol: &FeatureVolume, action: &DiscreteAction) -> Result<Array2<f64>> {
        if regressed.rows.len() != regressed.scene.len() || regressed.rows.iter().any(|&r| r >= vol.len()) {
            return Err(Error::shape("deformation input", "scene aligned with the volume", "misaligned rows"));
        }
        action.validate(self.config.voxel_resolution)?;
        let d = vol.features.ncols();
        let emb = action.embedding(&self.config.workspace, self.config.voxel_resolution);
        let ws = &self.config.workspace;
        let mut input = Array2::zeros((regressed.scene.len(), d + 7 + ACTION_EMBEDDING));
        for (i, (p, &row)) in regressed.scene.primitives.iter().zip(&regressed.rows).enumerate() {
            let mut r = input.row_mut(i);
            let n = ws.normalized(p.position());
            for k in 0..3 {
                r[k] = n[k];
            }
            for k in 0..4 {
                r[3 + k] = p.rotation()[k];
            }
            r.slice_mut(s![7..7 + d]).assign(&vol.features.row(row));
            for k in 0..ACTION_EMBEDDING {
                r[7 + d + k] = emb[k];
            }
        }
        Ok(input)
    }

    pub fn predict_deformation(
        &self,
        regressed: &RegressedScene,
        vol: &FeatureVolume,
        action: &DiscreteAction,
    ) -> Result<Vec<DeformationDelta>> {
        Ok(self.deform_traced(regressed, vol, action)?.0)
    }

    fn deform_traced(
        &self,
        regressed: &RegressedScene,
        vol: &FeatureVolume,
        action: &DiscreteAction,
    ) -> Result<(Vec<DeformationDelta>, DeformTrace)> {
        let input = self.deformation_input(regressed, vol, action)?;
        let (raw, cache) = self.params.deformation.forward(input.view())?;
        let gain = self.params.deform_gain[0];
        let deltas = raw
            .rows()
            .into_iter()
            .map(|o| DeformationDelta {
                d_position: Vector3::new(gain * o[0], gain * o[1], gain * o[2]),
                d_rotation: [o[3], o[4], o[5], o[6]],
            })
            .collect();
        Ok((deltas, DeformTrace { raw, cache }))
    }

    fn decoder_input(&self, vol: &FeatureVolume, proprioception: &[f64; 4], task: &[f64; 3]) -> Result<(Array2<f64>, Vec<usize>)> {
        if vol.is_empty() {
            return Err(Error::EmptyScene("no occupied voxels to decode".into()));
        }
        let d = vol.features.ncols();
        let n = vol.len() as f64;
        let mut z = Vec::with_capacity(2 * d + 7);
        let mut argmax_rows = Vec::with_capacity(d);
        for c in 0..d {
            z.push(vol.features.column(c).sum() / n);
        }
        for c in 0..d {
            let col = vol.features.column(c);
            let mut best = 0;
            for (r, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = r;
                }
            }
            argmax_rows.push(best);
            z.push(col[best]);
        }
        z.extend_from_slice(proprioception);
        z.extend_from_slice(task);
        Ok((Array2::from_shape_vec((1, z.len()), z).expect("row"), argmax_rows))
    }

    /// Action logits from pooled volume features, proprioception and the
    /// task one-hot.
    pub fn decode_action(&self, vol: &FeatureVolume, proprioception: &[f64; 4], task: &[f64; 3]) -> Result<ActionLogits> {
        Ok(self.decode_traced(vol, proprioception, task)?.0)
    }

    fn decode_traced(&self, vol: &FeatureVolume, proprioception: &[f64; 4], task: &[f64; 3]) -> Result<(ActionLogits, DecodeTrace)> {
        let (z, argmax_rows) = self.decoder_input(vol, proprioception, task)?;
        let (out, cache) = self.params.decoder.forward(z.view())?;
        let out = out.row(0);
        let t = self.config.translation_bins();
        let r = 3 * ROTATION_BINS;
        let logits = ActionLogits {
            translation: out.slice(s![..t]).to_vec(),
            rotation: out.slice(s![t..t + r]).to_vec(),
            openness: [out[t + r], out[t + r + 1]],
            collision: [out[t + r + 2], out[t + r + 3]],
        };
        Ok((logits, DecodeTrace { cache, argmax_rows }))
    }

    /// Full chain from an observation: renders the regressed scene and its
    /// predicted successor from every camera.
    pub fn rollout_future(
        &self,
        obs: &Observation,
        obs_camera: &Camera,
        task: Task,
        action: &DiscreteAction,
        cams: &[Camera],
    ) -> Result<Rollout> {
        let grid = self.voxelize(obs, obs_camera)?;
        let vol = self.encode(&grid)?;
        let regressed = self.regress_gaussians(&vol)?;
        let deltas = self.predict_deformation(&regressed, &vol, action)?;
        let scene_t1 = propagate(&regressed.scene, &deltas)?;
        let logits = self.decode_action(&vol, &obs.proprioception, &task.one_hot())?;
        let s = self.settings();
        let current = cams.par_iter().map(|c| render(&regressed.scene, c, s)).collect::<Result<_>>()?;
        let future = cams.par_iter().map(|c| render(&scene_t1, c, s)).collect::<Result<_>>()?;
        Ok(Rollout {
            current,
            future,
            scene_t: regressed.scene,
            scene_t1,
            deltas,
            logits,
        })
    }

    /// Unweighted loss terms of one transition and the gradient of
    /// `Σ coeffs·term` with respect to every parameter.
    pub fn loss_and_grad(&self, t: &Transition, coeffs: &LossComponents) -> Result<(LossComponents, WorldModelParams)> {
        let grid = self.voxelize(&t.observation, &t.camera)?;
        let (vol, enc) = self.encode_traced(&grid)?;
        let (regressed, reg) = self.regress_traced(&vol)?;
        let (deltas, def) = self.deform_traced(&regressed, &vol, &t.action)?;
        let (logits, dec) = self.decode_traced(&vol, &t.observation.proprioception, &t.task.one_hot())?;

        let scene = scene_losses(&regressed.scene, &deltas, &t.views, self.settings(), coeffs)?;
        let (act, g_logits) = action_loss_with_grad(&logits, &t.action)?;
        let components = LossComponents {
            act,
            ..scene.components
        };

        let mut grads = self.params.zeros_like();
        let n = regressed.scene.len();
        let d = vol.features.ncols();
        let mut g_features = Array2::<f64>::zeros(vol.features.dim());
        let mut g_prims = scene.grad_scene;

        if coeffs.dyna != 0.0 {
            let gain = self.params.deform_gain[0];
            let mut g_raw = Array2::zeros((n, DEFORMATION_OUTPUTS));
            let mut g_gain = 0.0;
            for i in 0..n {
                let gd = &scene.grad_deltas[i];
                for k in 0..3 {
                    g_raw[[i, k]] = gain * gd.d_position[k];
                    g_gain += def.raw[[i, k]] * gd.d_position[k];
                }
                for k in 0..4 {
                    g_raw[[i, 3 + k]] = gd.d_rotation[k];
                }
            }
            let (g_in, g_net) = self.params.deformation.backward(&def.cache, g_raw.view())?;
            grads.deformation = g_net;
            grads.deform_gain = [g_gain];
            let extent = self.config.workspace.extent();
            for (i, &row) in regressed.rows.iter().enumerate() {
                for k in 0..3 {
                    g_prims[i].position[k] += g_in[[i, k]] / extent[k];
                }
                for k in 0..4 {
                    g_prims[i].rotation[k] += g_in[[i, 3 + k]];
                }
                let mut gf = g_features.row_mut(row);
                gf += &g_in.slice(s![i, 7..7 + d]);
            }
        }

        // regressor heads
        let pitch = vol.workspace.pitch(vol.resolution);
        let max_scale = 0.5 * vol.workspace.max_extent();
        let mut g_raw = Array2::zeros((n, REGRESSOR_OUTPUTS));
        for i in 0..n {
            let o = reg.raw.row(i);
            let g = &g_prims[i];
            let mut gr = g_raw.row_mut(i);
            for k in 0..3 {
                let th = o[OFF + k].tanh();
                gr[OFF + k] = g.position[k] * pitch[k] * (1.0 - th * th);
            }
            for k in 0..SH_COEFFS {
                gr[SH + k] = g.sh_coeffs[k];
            }
            if !reg.degenerate_rot[i] {
                let raw_q = [o[ROT], o[ROT + 1], o[ROT + 2], o[ROT + 3]];
                let gq = normalize_quat_backward(&raw_q, &g.rotation);
                for k in 0..4 {
                    gr[ROT + k] = gq[k];
                }
            }
            for k in 0..3 {
                let e = o[SCALE + k].exp();
                if e > MIN_SCALE && e < max_scale {
                    gr[SCALE + k] = g.scale[k] * e;
                }
            }
            let op = sigmoid(o[OPACITY]);
            gr[OPACITY] = g.opacity * op * (1.0 - op);
            for k in 0..3 {
                gr[SEM + k] = g.semantic[k];
            }
        }
        let (g_reg_in, g_reg) = self.params.regressor.backward(&reg.cache, g_raw.view())?;
        grads.regressor = g_reg;
        for (i, &row) in regressed.rows.iter().enumerate() {
            let mut gf = g_features.row_mut(row);
            gf += &g_reg_in.row(i);
        }

        // decoder and pooling
        let flat_g: Vec<f64> = g_logits
            .translation
            .iter()
            .chain(&g_logits.rotation)
            .chain(&g_logits.openness)
            .chain(&g_logits.collision)
            .map(|v| v * coeffs.act)
            .collect();
        let g_out = ArrayView2::from_shape((1, flat_g.len()), &flat_g).expect("row");
        let (g_z, g_dec) = self.params.decoder.backward(&dec.cache, g_out)?;
        grads.decoder = g_dec;
        let nv = vol.len() as f64;
        for c in 0..d {
            let gm = g_z[[0, c]] / nv;
            g_features.column_mut(c).mapv_inplace(|v| v + gm);
            g_features[[dec.argmax_rows[c], c]] += g_z[[0, d + c]];
        }

        let (_, g_enc) = self.params.encoder.backward(&enc.cache, g_features.view())?;
        grads.encoder = g_enc;
        Ok((components, grads))
    }

    /// Loss terms without gradients.
    pub fn losses(&self, t: &Transition) -> Result<LossComponents> {
        let grid = self.voxelize(&t.observation, &t.camera)?;
        let vol = self.encode(&grid)?;
        let regressed = self.regress_gaussians(&vol)?;
        let deltas = self.predict_deformation(&regressed, &vol, &t.action)?;
        let logits = self.decode_action(&vol, &t.observation.proprioception, &t.task.one_hot())?;
        let zero = LossComponents::default();
        let scene = scene_losses(&regressed.scene, &deltas, &t.views, self.settings(), &zero)?;
        Ok(LossComponents {
            act: crate::losses::loss_act(&logits, &t.action)?,
            ..scene.components
        })
    }
}
