use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Params, Precision};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
    Lamb,
}

impl Algorithm {
    pub fn tag(self) -> u8 {
        match self {
            Algorithm::Sgd => 0,
            Algorithm::Adam => 1,
            Algorithm::Lamb => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Algorithm::Sgd),
            1 => Some(Algorithm::Adam),
            2 => Some(Algorithm::Lamb),
            _ => None,
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "adam" => Ok(Algorithm::Adam),
            "lamb" => Ok(Algorithm::Lamb),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Upper clamp of the LAMB trust ratio.
    pub trust_clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lamb,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 1e-6,
            trust_clip: 10.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            algorithm: Algorithm::Sgd,
            learning_rate,
            weight_decay: 0.0,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate,
            epsilon: 1e-8,
            weight_decay: 0.0,
            ..Self::default()
        }
    }
}

/// First/second moment buffers of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub steps: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    pub moments: BTreeMap<String, Moments>,
}

/// Per-tensor diagnostics from one update.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub trust_ratios: Vec<(String, f64)>,
    pub updated: usize,
    pub frozen: usize,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update with learning rate `lr`. Tensors for which `frozen`
    /// returns true are left untouched, moments included. Non-finite
    /// gradients abort the whole step before anything is modified.
    pub fn step<P: Params>(
        &mut self,
        params: &mut P,
        grads: &P,
        lr: f64,
        frozen: &dyn Fn(&str) -> bool,
    ) -> Result<StepReport> {
        let mut grad_list: Vec<(String, Vec<f64>)> = Vec::new();
        grads.visit("", &mut |name, _, data| grad_list.push((name.to_string(), data.to_vec())));
        for (name, g) in &grad_list {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }
        let mut shape_error = None;
        let mut idx = 0;
        params.visit_mut("", &mut |name, data| {
            match grad_list.get(idx) {
                Some((gname, g)) if gname == name && g.len() == data.len() => {}
                _ => {
                    shape_error.get_or_insert_with(|| name.to_string());
                }
            }
            idx += 1;
        });
        if let Some(name) = shape_error.or_else(|| (idx != grad_list.len()).then(|| "<count>".to_string())) {
            return Err(Error::shape("optimizer step", "gradients aligned with parameters", name));
        }

        self.step_count += 1;
        let cfg = self.config.clone();
        let moments = &mut self.moments;
        let mut report = StepReport::default();
        let mut idx = 0;
        params.visit_mut("", &mut |name, data| {
            let g = &grad_list[idx].1;
            idx += 1;
            if frozen(name) {
                report.frozen += 1;
                return;
            }
            report.updated += 1;
            match cfg.algorithm {
                Algorithm::Sgd => {
                    for (p, g) in data.iter_mut().zip(g) {
                        *p -= lr * (g + cfg.weight_decay * *p);
                    }
                }
                Algorithm::Adam | Algorithm::Lamb => {
                    let mo = moments.entry(name.to_string()).or_insert_with(|| Moments {
                        steps: 0,
                        m: vec![0.0; data.len()],
                        v: vec![0.0; data.len()],
                    });
                    mo.steps += 1;
                    let bc1 = 1.0 - cfg.beta1.powi(mo.steps as i32);
                    let bc2 = 1.0 - cfg.beta2.powi(mo.steps as i32);
                    let mut update = Vec::with_capacity(data.len());
                    for i in 0..data.len() {
                        mo.m[i] = cfg.beta1 * mo.m[i] + (1.0 - cfg.beta1) * g[i];
                        mo.v[i] = cfg.beta2 * mo.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                        let m_hat = mo.m[i] / bc1;
                        let v_hat = mo.v[i] / bc2;
                        update.push(m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * data[i]);
                    }
                    let ratio = if cfg.algorithm == Algorithm::Lamb {
                        let r = lamb_trust_ratio(data, &update, cfg.trust_clip);
                        report.trust_ratios.push((name.to_string(), r));
                        r
                    } else {
                        1.0
                    };
                    for (p, u) in data.iter_mut().zip(&update) {
                        *p -= lr * ratio * u;
                    }
                }
            }
        });
        Ok(report)
    }

    /// Rounds every moment buffer to the given storage precision.
    pub fn round_moments(&mut self, precision: Precision) {
        for mo in self.moments.values_mut() {
            precision.round(&mut mo.m);
            precision.round(&mut mo.v);
        }
    }
}

/// `‖p‖ / ‖u‖` clamped to `[0, clip]`; 1 when either norm vanishes.
pub fn lamb_trust_ratio(params: &[f64], update: &[f64], clip: f64) -> f64 {
    let pn = params.iter().map(|v| v * v).sum::<f64>().sqrt();
    let un = update.iter().map(|v| v * v).sum::<f64>().sqrt();
    if pn > 0.0 && un > 0.0 {
        (pn / un).clamp(0.0, clip)
    } else {
        1.0
    }
}

/// Linear warm-up followed by cosine decay to zero at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub warmup: u64,
    pub total: u64,
}

impl CosineSchedule {
    pub fn lr(&self, iteration: u64) -> f64 {
        if iteration < self.warmup {
            return self.base_lr * (iteration + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let progress = ((iteration - self.warmup) as f64 / span as f64).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Mlp};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_param(value: f64) -> DenseLayer {
        let mut l = DenseLayer::zeros(1, 1, Activation::Identity);
        l.weights[[0, 0]] = value;
        l
    }

    #[test]
    fn sgd_basic() {
        let mut p = scalar_param(1.0);
        let mut g = p.zeros_like();
        g.weights[[0, 0]] = 1.0;
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1));
        st.step(&mut p, &g, 0.1, &|_| false).unwrap();
        assert!((p.weights[[0, 0]] - 0.9).abs() < 1e-15);
    }

    fn random_net(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::from_widths(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng)
    }

    #[test]
    fn zero_gradient_and_zero_decay_leave_params() {
        for algorithm in [Algorithm::Sgd, Algorithm::Adam, Algorithm::Lamb] {
            let mut net = random_net(1);
            let before = net.clone();
            let grads = net.zeros_like();
            let cfg = OptimizerConfig {
                algorithm,
                weight_decay: 0.0,
                ..OptimizerConfig::default()
            };
            let mut st = OptimizerState::new(cfg);
            for _ in 0..3 {
                st.step(&mut net, &grads, 0.01, &|_| false).unwrap();
            }
            assert_eq!(net, before, "{algorithm:?}");
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for algorithm in [Algorithm::Sgd, Algorithm::Adam, Algorithm::Lamb] {
            let mut net = random_net(2);
            let before = net.clone();
            let mut grads = net.zeros_like();
            grads.fill(0.7);
            let mut st = OptimizerState::new(OptimizerConfig {
                algorithm,
                ..OptimizerConfig::default()
            });
            st.step(&mut net, &grads, 0.0, &|_| false).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn lamb_matches_direct_formula() {
        let mut layer = DenseLayer::zeros(2, 1, Activation::Identity);
        layer.weights = array![[0.5, -1.0]];
        layer.bias = array![0.25];
        let mut grads = layer.zeros_like();
        grads.weights = array![[0.2, 0.4]];
        grads.bias = array![-0.3];
        let cfg = OptimizerConfig::default();
        let lr = 0.01;
        let mut st = OptimizerState::new(cfg.clone());
        // seed known moments from a previous step
        st.moments.insert(
            "weight".into(),
            Moments {
                steps: 1,
                m: vec![0.05, -0.02],
                v: vec![1e-3, 4e-4],
            },
        );
        let before = layer.clone();
        st.step(&mut layer, &grads, lr, &|_| false).unwrap();

        // transcription of the LAMB update for the weight tensor
        let (b1, b2, eps, wd) = (0.9f64, 0.999f64, 1e-6, 1e-6);
        let p0 = [0.5, -1.0];
        let g = [0.2, 0.4];
        let m0 = [0.05, -0.02];
        let v0 = [1e-3, 4e-4];
        let mut r = [0.0; 2];
        for i in 0..2 {
            let m = b1 * m0[i] + (1.0 - b1) * g[i];
            let v = b2 * v0[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m / (1.0 - b1 * b1);
            let vh = v / (1.0 - b2 * b2);
            r[i] = mh / (vh.sqrt() + eps) + wd * p0[i];
        }
        let pn = (p0[0] * p0[0] + p0[1] * p0[1]).sqrt();
        let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
        let trust = (pn / rn).min(10.0);
        for i in 0..2 {
            let expected = p0[i] - lr * trust * r[i];
            assert!((layer.weights[[0, i]] - expected).abs() < 1e-15);
        }
        // the bias had no history: first step, bias correction 1 - beta
        let m = (1.0 - b1) * -0.3;
        let v = (1.0 - b2) * 0.09;
        let rb = (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps) + wd * 0.25;
        let trust = (0.25f64 / rb.abs()).min(10.0);
        assert!((layer.bias[0] - (before.bias[0] - lr * trust * rb)).abs() < 1e-15);
    }

    #[test]
    fn trust_ratio_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..20);
            let scale_p = 10f64.powf(rng.gen_range(-4.0..4.0));
            let scale_u = 10f64.powf(rng.gen_range(-4.0..4.0));
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale_p).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale_u).collect();
            let r = lamb_trust_ratio(&p, &u, 10.0);
            assert!((0.0..=10.0).contains(&r));
        }
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut net = random_net(3);
        let before = net.clone();
        let mut grads = net.zeros_like();
        grads.layers[1].bias[0] = f64::NAN;
        let mut st = OptimizerState::new(OptimizerConfig::default());
        let err = st.step(&mut net, &grads, 0.1, &|_| false).unwrap_err();
        match err {
            Error::NonFiniteGradient { name } => assert_eq!(name, "1.bias"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(net, before);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn frozen_tensors_untouched() {
        let mut net = random_net(4);
        let before = net.clone();
        let mut grads = net.zeros_like();
        grads.fill(1.0);
        let mut st = OptimizerState::new(OptimizerConfig::default());
        st.step(&mut net, &grads, 0.1, &|name| name.starts_with("0.")).unwrap();
        assert_eq!(net.layers[0], before.layers[0]);
        assert_ne!(net.layers[1], before.layers[1]);
        assert!(!st.moments.contains_key("0.weight"));
    }

    #[test]
    fn cosine_schedule_shape() {
        let s = CosineSchedule {
            base_lr: 1.0,
            warmup: 10,
            total: 110,
        };
        assert!((s.lr(0) - 0.1).abs() < 1e-12);
        assert!((s.lr(9) - 1.0).abs() < 1e-12);
        assert!((s.lr(10) - 1.0).abs() < 1e-12);
        assert!((s.lr(60) - 0.5).abs() < 1e-12);
        assert!(s.lr(110).abs() < 1e-12);
    }
}
