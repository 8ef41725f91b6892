//! Run configuration, training data assembly, the world-model training loop
//! and evaluation.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{argmax, ROTATION_BINS};
use crate::error::{Error, Result};
use crate::image::psnr_from_mse;
use crate::losses::{LossComponents, LossWeights};
use crate::nn::{CosineSchedule, OptimizerConfig, OptimizerState, Params, Precision};
use crate::persistence::{self, load_checkpoint, save_checkpoint, Checkpoint, DatasetManifest};
use crate::synthetic::{load_rig, raycast_render, CameraRig, DataConfig, Episode, ScriptSettings, Task};
use crate::world_model::{is_deformation_param, Observation, SupervisionView, Transition, WorldModel, WorldModelConfig};

/// Where training transitions come from and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Dataset directory written by `gen-data`; when absent, episodes are
    /// scripted and ray-cast in memory.
    pub dataset: Option<PathBuf>,
    pub tasks: Vec<Task>,
    pub episodes_per_task: usize,
    /// The last this-many episodes of every task form the evaluation split.
    pub held_out_per_task: usize,
    /// Size of the supervision camera ring.
    pub supervision_cameras: usize,
    /// Rig cameras used for the rendering losses (0 is the front camera).
    pub views: Vec<usize>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            dataset: None,
            tasks: Task::ALL.to_vec(),
            episodes_per_task: 20,
            held_out_per_task: 2,
            supervision_cameras: 20,
            views: vec![0, 1, 6, 11, 16],
        }
    }
}

/// Every knob of a training run. Defaults follow the published
/// hyperparameters; the model section holds the desk-scale sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Bins per rotation axis; fixed by the action space.
    pub rotation_bins: usize,
    /// Linear learning-rate warm-up before the cosine decay.
    pub lr_warmup: u64,
    pub precision: Precision,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
    pub out: PathBuf,
    pub optimizer: OptimizerConfig,
    pub losses: LossWeights,
    pub model: WorldModelConfig,
    pub data: DataSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 100_000,
            batch_size: 2,
            image_width: 128,
            image_height: 128,
            rotation_bins: ROTATION_BINS,
            lr_warmup: 3000,
            precision: Precision::F32,
            checkpoint_every: 10_000,
            out: PathBuf::from("runs/default"),
            optimizer: OptimizerConfig::default(),
            losses: LossWeights::default(),
            model: WorldModelConfig::default(),
            data: DataSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("batch size and image size must be positive".into()));
        }
        if self.rotation_bins != ROTATION_BINS {
            return Err(Error::Config(format!(
                "rotation_bins is fixed at {ROTATION_BINS}, got {}",
                self.rotation_bins
            )));
        }
        if !(self.optimizer.learning_rate > 0.0) || !(self.optimizer.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        if self.data.views.is_empty() || self.data.views.iter().any(|&v| v > self.data.supervision_cameras) {
            return Err(Error::Config(format!(
                "views {:?} must index the front camera or the {}-camera ring",
                self.data.views, self.data.supervision_cameras
            )));
        }
        if self.data.tasks.is_empty() || self.data.held_out_per_task >= self.data.episodes_per_task {
            return Err(Error::Config("need at least one task and one training episode per task".into()));
        }
        self.losses.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.model.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule {
            base_lr: self.optimizer.learning_rate,
            warmup: self.lr_warmup,
            total: self.iterations,
        }
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            tasks: self.data.tasks.clone(),
            episodes_per_task: self.data.episodes_per_task,
            seed: self.seed,
            width: self.image_width,
            height: self.image_height,
            supervision_cameras: self.data.supervision_cameras,
            script: ScriptSettings {
                workspace: self.model.workspace,
                resolution: self.model.voxel_resolution,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Consecutive keyframe pairs of one episode as training transitions.
pub fn episode_transitions(episode: &Episode, rig: &CameraRig, views: &[usize]) -> Result<Vec<Transition>> {
    let cams: Vec<_> = rig.all().collect();
    let renders: Vec<Vec<_>> = episode
        .keyframes
        .par_iter()
        .map(|k| views.iter().map(|&v| raycast_render(&k.state, cams[v])).collect())
        .collect();
    let fronts: Vec<_> = episode
        .keyframes
        .par_iter()
        .map(|k| raycast_render(&k.state, &rig.front))
        .collect();
    let mut out = Vec::new();
    for k in 0..episode.keyframes.len().saturating_sub(1) {
        let kf = &episode.keyframes[k];
        out.push(Transition {
            task: episode.task,
            observation: Observation {
                rgb: fronts[k].rgb.clone(),
                depth: fronts[k].depth.clone(),
                proprioception: kf.proprioception,
            },
            camera: rig.front.clone(),
            action: kf.action,
            views: views
                .iter()
                .enumerate()
                .map(|(i, &v)| SupervisionView {
                    camera: cams[v].clone(),
                    rgb: renders[k][i].rgb.clone(),
                    semantic: renders[k][i].semantic.clone(),
                    future_rgb: renders[k + 1][i].rgb.clone(),
                })
                .collect(),
        });
    }
    Ok(out)
}

fn split_of(position_in_task: usize, per_task: usize, held_out: usize) -> Split {
    if position_in_task + held_out >= per_task {
        Split::Eval
    } else {
        Split::Train
    }
}

/// Scripts the configured episodes in memory and returns the transitions of
/// one split.
pub fn generate_transitions(config: &RunConfig, split: Split) -> Result<Vec<Transition>> {
    let dc = config.data_config();
    let rig = CameraRig::new(dc.width, dc.height, dc.supervision_cameras)?;
    let episodes = dc.episodes()?;
    let per_task = config.data.episodes_per_task;
    let chosen: Vec<&Episode> = episodes
        .iter()
        .enumerate()
        .filter(|(i, _)| split_of(i % per_task, per_task, config.data.held_out_per_task) == split)
        .map(|(_, e)| e)
        .collect();
    let nested = chosen
        .into_iter()
        .map(|e| episode_transitions(e, &rig, &config.data.views))
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Reads transitions of one split from a dataset directory.
pub fn load_transitions(root: &Path, manifest: &DatasetManifest, views: &[usize], held_out: usize, split: Split) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    let mut rig_cache: Option<(String, CameraRig)> = None;
    let mut per_task: std::collections::BTreeMap<Task, Vec<usize>> = Default::default();
    for s in &manifest.samples {
        let eps = per_task.entry(s.task).or_default();
        if !eps.contains(&s.episode) {
            eps.push(s.episode);
        }
    }
    for pair in manifest.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.episode != b.episode || b.keyframe != a.keyframe + 1 {
            continue;
        }
        let eps = &per_task[&a.task];
        let pos = eps.iter().position(|&e| e == a.episode).expect("episode listed");
        if split_of(pos, eps.len(), held_out) != split {
            continue;
        }
        if rig_cache.as_ref().map(|(f, _)| f != &a.camera_file).unwrap_or(true) {
            rig_cache = Some((a.camera_file.clone(), load_rig(&root.join(&a.camera_file))?));
        }
        let rig = &rig_cache.as_ref().expect("rig loaded").1;
        let cams: Vec<_> = rig.all().cloned().collect();
        let (rgb, depth, _) = a.load_view(root, 0)?;
        let mut sup = Vec::with_capacity(views.len());
        for &v in views {
            let cam = cams
                .get(v)
                .ok_or_else(|| Error::IndexOutOfRange(format!("view {v} of {} cameras", cams.len())))?;
            let (rgb_t, _, sem_t) = a.load_view(root, v)?;
            let (rgb_t1, _, _) = b.load_view(root, v)?;
            sup.push(SupervisionView {
                camera: cam.clone(),
                rgb: rgb_t,
                semantic: sem_t,
                future_rgb: rgb_t1,
            });
        }
        out.push(Transition {
            task: a.task,
            observation: Observation {
                rgb,
                depth,
                proprioception: a.proprioception,
            },
            camera: rig.front.clone(),
            action: a.action,
            views: sup,
        });
    }
    Ok(out)
}

/// Transitions of one split from the configured source.
pub fn transitions(config: &RunConfig, split: Split) -> Result<Vec<Transition>> {
    match &config.data.dataset {
        Some(root) => {
            let manifest = persistence::load_manifest(root)?;
            load_transitions(root, &manifest, &config.data.views, config.data.held_out_per_task, split)
        }
        None => generate_transitions(config, split),
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub lr: f64,
    pub total: f64,
    pub act: f64,
    pub geo: f64,
    pub sem: f64,
    pub dyna: f64,
    pub dyna_in_gradient: bool,
    pub grad_norm: f64,
    pub deformation_grad_norm: f64,
    pub seconds: f64,
}

/// A model, its optimizer and the sampling stream, advanced one update at
/// a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: RunConfig,
    pub model: WorldModel,
    pub optimizer: OptimizerState,
    pub iteration: u64,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mut model = WorldModel::new(config.model.clone(), config.seed)?;
        config.precision.round_params(&mut model.params);
        let optimizer = OptimizerState::new(config.optimizer.clone());
        let rng_seed = config.seed ^ 0x5eed_0fda_7a;
        Ok(Self {
            config,
            model,
            optimizer,
            iteration: 0,
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = RunConfig::from_toml(&ck.config)?;
        let mut t = Self::new(config)?;
        t.model.params.load_tensors(&ck.tensors)?;
        t.optimizer = ck.optimizer.clone();
        t.iteration = ck.iteration;
        t.rng_seed = ck.rng_seed;
        t.rng = ChaCha8Rng::seed_from_u64(ck.rng_seed);
        t.rng.set_word_pos(ck.rng_word_pos);
        Ok(t)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            iteration: self.iteration,
            precision: self.config.precision,
            tensors: self.model.params.to_tensors(),
            optimizer: self.optimizer.clone(),
            config: self.config.to_toml()?,
            rng_seed: self.rng_seed,
            rng_word_pos: self.rng.get_word_pos(),
        })
    }

    /// Samples a batch, back-propagates the weighted loss and applies one
    /// optimizer update. During warm-up the deformation tensors are frozen.
    pub fn step(&mut self, data: &[Transition]) -> Result<LogRecord> {
        if data.is_empty() {
            return Err(Error::InvalidParameter("no training transitions".into()));
        }
        let start = Instant::now();
        let it = self.iteration;
        let weights = self.config.losses;
        let coeffs = weights.gradient_coefficients(it);
        let batch: Vec<usize> = (0..self.config.batch_size).map(|_| self.rng.gen_range(0..data.len())).collect();
        let model = &self.model;
        let results = batch
            .par_iter()
            .map(|&i| model.loss_and_grad(&data[i], &coeffs))
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut components = LossComponents::default();
        let mut grads = self.model.params.zeros_like();
        for (c, g) in &results {
            components = components.add(c);
            grads.accumulate(g);
        }
        components = components.scale(scale);
        grads.scale_all(scale);
        let total = crate::losses::total_loss(&components, &weights, it)?;
        let mut deform_sq = 0.0;
        grads.visit("", &mut |name, _, d| {
            if is_deformation_param(name) {
                deform_sq += d.iter().map(|v| v * v).sum::<f64>();
            }
        });
        let lr = self.config.schedule().lr(it);
        let warm = weights.in_warmup(it);
        self.optimizer
            .step(&mut self.model.params, &grads, lr, &|name| warm && is_deformation_param(name))?;
        self.config.precision.round_params(&mut self.model.params);
        self.optimizer.round_moments(self.config.precision);
        self.iteration += 1;
        Ok(LogRecord {
            iteration: it,
            lr,
            total: total.total,
            act: components.act,
            geo: components.geo,
            sem: components.sem,
            dyna: components.dyna,
            dyna_in_gradient: total.dyna_in_gradient,
            grad_norm: grads.l2_norm(),
            deformation_grad_norm: deform_sq.sqrt(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs until `config.iterations`, appending one JSON line per update to
    /// `out/train_log.jsonl` and writing checkpoints when `out` is given.
    pub fn run(&mut self, data: &[Transition], out: Option<&Path>, mut on_step: impl FnMut(&Trainer, &LogRecord)) -> Result<()> {
        let mut log = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("train_log.jsonl");
                Some((
                    OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?,
                    path,
                ))
            }
            None => None,
        };
        while self.iteration < self.config.iterations {
            let rec = self.step(data)?;
            if let Some((file, path)) = log.as_mut() {
                let line = serde_json::to_string(&rec).expect("log record serializes");
                writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
            }
            on_step(self, &rec);
            if let Some(dir) = out {
                let every = self.config.checkpoint_every;
                if every > 0 && self.iteration % every == 0 && self.iteration < self.config.iterations {
                    save_checkpoint(&self.checkpoint()?, &dir.join(format!("checkpoint_{:06}.spwm", self.iteration)))?;
                }
            }
        }
        if let Some(dir) = out {
            save_checkpoint(&self.checkpoint()?, &dir.join("final.spwm"))?;
        }
        Ok(())
    }
}

/// Trains a world model from scratch on the configured data.
pub fn train_world(config: &RunConfig, out: Option<&Path>) -> Result<Trainer> {
    let data = transitions(config, Split::Train)?;
    let mut trainer = Trainer::new(config.clone())?;
    trainer.run(&data, out, |_, rec| {
        if rec.iteration % 100 == 0 {
            log::info!(
                "iter {} total {:.5} act {:.4} geo {:.5} dyna {:.5}",
                rec.iteration,
                rec.total,
                rec.act,
                rec.geo,
                rec.dyna
            );
        }
    })?;
    Ok(trainer)
}

/// Rebuilds the model stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(RunConfig, WorldModel)> {
    let ck = load_checkpoint(path)?;
    let config = RunConfig::from_toml(&ck.config)?;
    let mut model = WorldModel::new(config.model.clone(), config.seed)?;
    model.params.load_tensors(&ck.tensors)?;
    Ok((config, model))
}

/// Evaluation summary over a set of transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub transitions: usize,
    /// PSNR of the predicted `t + 1` renders against the true next frames.
    pub future_psnr: f64,
    /// PSNR of the undeformed renders against the true next frames.
    pub baseline_psnr: f64,
    /// PSNR of the `t` renders against the current frames.
    pub current_psnr: f64,
    /// Argmax accuracy of translation, rotation x/y/z, openness, collision.
    pub head_accuracy: [f64; 6],
    pub losses: LossComponents,
}

pub fn evaluate(model: &WorldModel, data: &[Transition]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("no evaluation transitions".into()));
    }
    struct One {
        sq: [f64; 3],
        count: f64,
        hits: [f64; 6],
        losses: LossComponents,
    }
    let per = data
        .par_iter()
        .map(|t| -> Result<One> {
            let cams: Vec<_> = t.views.iter().map(|v| v.camera.clone()).collect();
            let r = model.rollout_future(&t.observation, &t.camera, t.task, &t.action, &cams)?;
            let mut sq = [0.0; 3];
            let mut count = 0.0;
            for (i, v) in t.views.iter().enumerate() {
                for (acc, (a, b)) in sq.iter_mut().zip([
                    (&r.future[i].rgb, &v.future_rgb),
                    (&r.current[i].rgb, &v.future_rgb),
                    (&r.current[i].rgb, &v.rgb),
                ]) {
                    *acc += a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                }
                count += v.rgb.data.len() as f64;
            }
            let p = r.logits.argmax();
            let e = t.action;
            let hits = [
                (p.translation_bin == e.translation_bin) as u8 as f64,
                (p.rotation_bins[0] == e.rotation_bins[0]) as u8 as f64,
                (p.rotation_bins[1] == e.rotation_bins[1]) as u8 as f64,
                (p.rotation_bins[2] == e.rotation_bins[2]) as u8 as f64,
                (argmax(&r.logits.openness) as u8 == e.openness) as u8 as f64,
                (argmax(&r.logits.collision) as u8 == e.collision) as u8 as f64,
            ];
            Ok(One {
                sq,
                count,
                hits,
                losses: model.losses(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per.len() as f64;
    let mut sq = [0.0; 3];
    let mut count = 0.0;
    let mut hits = [0.0; 6];
    let mut losses = LossComponents::default();
    for o in &per {
        for k in 0..3 {
            sq[k] += o.sq[k];
        }
        count += o.count;
        for k in 0..6 {
            hits[k] += o.hits[k];
        }
        losses = losses.add(&o.losses);
    }
    Ok(EvalReport {
        transitions: per.len(),
        future_psnr: psnr_from_mse(sq[0] / count),
        baseline_psnr: psnr_from_mse(sq[1] / count),
        current_psnr: psnr_from_mse(sq[2] / count),
        head_accuracy: hits.map(|h| h / n),
        losses: losses.scale(1.0 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_run() -> RunConfig {
        RunConfig {
            iterations: 6,
            image_width: 24,
            image_height: 24,
            checkpoint_every: 0,
            lr_warmup: 2,
            precision: Precision::F64,
            losses: LossWeights {
                warmup_iters: 3,
                ..LossWeights::default()
            },
            model: WorldModelConfig {
                voxel_resolution: 20,
                feature_dim: 6,
                hidden_dim: 6,
                decoder_hidden: 8,
                ..WorldModelConfig::default()
            },
            data: DataSpec {
                tasks: vec![Task::PushToTarget],
                episodes_per_task: 3,
                held_out_per_task: 1,
                supervision_cameras: 4,
                views: vec![0, 2],
                dataset: None,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn defaults_follow_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.iterations, 100_000);
        assert_eq!(c.batch_size, 2);
        assert_eq!(c.optimizer.learning_rate, 5e-4);
        assert_eq!(c.optimizer.weight_decay, 1e-6);
        assert_eq!(c.model.max_gaussians, 16384);
        assert_eq!((c.image_width, c.image_height), (128, 128));
        assert_eq!(c.losses.warmup_iters, 3000);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_validation_names_the_problem() {
        let mut c = RunConfig::default();
        c.rotation_bins = 36;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("batch_size = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("no_such_knob = 1"), Err(Error::Config(_))));
        let err = RunConfig::from_toml("[optimizer]\nalgorithm = \"rmsprop\"").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn splits_are_disjoint() {
        let c = tiny_run();
        let train = generate_transitions(&c, Split::Train).unwrap();
        let eval = generate_transitions(&c, Split::Eval).unwrap();
        assert!(!train.is_empty() && !eval.is_empty());
        assert!(train.iter().all(|t| !eval.contains(t)));
        assert_eq!(train[0].views.len(), 2);
    }

    #[test]
    fn warmup_freezes_deformation_and_logs_zero_norm() {
        let c = tiny_run();
        let data = generate_transitions(&c, Split::Train).unwrap();
        let mut t = Trainer::new(c).unwrap();
        let initial = t.model.params.deformation.clone();
        let mut seen = Vec::new();
        t.run(&data, None, |tr, rec| seen.push((rec.clone(), tr.model.params.deformation.clone())))
            .unwrap();
        for (rec, deform) in &seen[..3] {
            assert_eq!(rec.deformation_grad_norm, 0.0);
            assert!(!rec.dyna_in_gradient);
            assert_eq!(*deform, initial);
        }
        assert!(seen[3].0.deformation_grad_norm > 0.0);
        assert_ne!(seen[3].1, initial);
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let c = tiny_run();
        let data = generate_transitions(&c, Split::Train).unwrap();
        let mut full = Trainer::new(c.clone()).unwrap();
        full.run(&data, None, |_, _| {}).unwrap();

        let mut snapshot = None;
        let mut again = Trainer::new(c.clone()).unwrap();
        again
            .run(&data, None, |tr, _| {
                if tr.iteration == 4 {
                    snapshot = Some(tr.checkpoint().unwrap());
                }
            })
            .unwrap();
        let ck = snapshot.unwrap();
        let mut resumed = Trainer::from_checkpoint(&ck).unwrap();
        resumed.run(&data, None, |_, _| {}).unwrap();
        assert_eq!(resumed.model.params, full.model.params);
    }

    #[test]
    fn evaluation_without_deformation_has_equal_future_and_baseline() {
        let c = tiny_run();
        let data = generate_transitions(&c, Split::Eval).unwrap();
        let mut m = WorldModel::new(c.model.clone(), 0).unwrap();
        m.params.deformation.fill(0.0);
        let r = evaluate(&m, &data).unwrap();
        assert_eq!(r.future_psnr, r.baseline_psnr);
        assert_eq!(r.transitions, data.len());
    }

    #[test]
    fn dataset_and_memory_transitions_agree() {
        let c = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        crate::synthetic::gen_dataset(&c.data_config(), dir.path()).unwrap();
        let mut disk = c.clone();
        disk.data.dataset = Some(dir.path().to_path_buf());
        for split in [Split::Train, Split::Eval] {
            let a = transitions(&disk, split).unwrap();
            let b = transitions(&c, split).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.action, y.action);
                // the on-disk copy is stored at 32-bit
                let worst = x.views[1]
                    .future_rgb
                    .data
                    .iter()
                    .zip(&y.views[1].future_rgb.data)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                assert!(worst < 1e-6);
            }
        }
    }
}
