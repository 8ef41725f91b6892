//! Training objectives: photometric, semantic, action and dynamics terms and
//! their weighted sum. Every loss returns its gradient alongside the value.

use serde::{Deserialize, Serialize};

use crate::action::{softmax, ActionLogits, DiscreteAction, ROTATION_BINS};
use crate::error::{Error, Result};
use crate::image::Image;

/// Norm below which a semantic vector counts as absent.
pub const SEM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_geo: f64,
    pub lambda_sem: f64,
    pub lambda_dyna: f64,
    pub warmup_iters: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_geo: 0.01,
            lambda_sem: 0.0001,
            lambda_dyna: 0.001,
            warmup_iters: 3000,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_geo", self.lambda_geo),
            ("lambda_sem", self.lambda_sem),
            ("lambda_dyna", self.lambda_dyna),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn in_warmup(&self, iteration: u64) -> bool {
        iteration < self.warmup_iters
    }

    /// Multipliers applied to each term's gradient. The dynamics term is
    /// reported during warm-up but carries no gradient.
    pub fn gradient_coefficients(&self, iteration: u64) -> LossComponents {
        LossComponents {
            act: 1.0,
            geo: self.lambda_geo,
            sem: self.lambda_sem,
            dyna: if self.in_warmup(iteration) { 0.0 } else { self.lambda_dyna },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub act: f64,
    pub geo: f64,
    pub sem: f64,
    pub dyna: f64,
}

impl LossComponents {
    pub fn add(&self, other: &LossComponents) -> LossComponents {
        LossComponents {
            act: self.act + other.act,
            geo: self.geo + other.geo,
            sem: self.sem + other.sem,
            dyna: self.dyna + other.dyna,
        }
    }

    pub fn scale(&self, s: f64) -> LossComponents {
        LossComponents {
            act: self.act * s,
            geo: self.geo * s,
            sem: self.sem * s,
            dyna: self.dyna * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub total: f64,
    pub components: LossComponents,
    /// False while the dynamics term is held out of backpropagation.
    pub dyna_in_gradient: bool,
}

/// `act + λ_geo·geo + λ_sem·sem + λ_dyna·dyna`. The reported total always
/// includes the dynamics term; `dyna_in_gradient` says whether it is trained.
pub fn total_loss(components: &LossComponents, weights: &LossWeights, iteration: u64) -> Result<TotalLoss> {
    weights.validate()?;
    let total = components.act
        + weights.lambda_geo * components.geo
        + weights.lambda_sem * components.sem
        + weights.lambda_dyna * components.dyna;
    Ok(TotalLoss {
        total,
        components: *components,
        dyna_in_gradient: !weights.in_warmup(iteration),
    })
}

/// Mean squared error over every pixel and channel, with its gradient.
pub fn mse_with_grad(pred: &Image, gt: &Image) -> Result<(f64, Image)> {
    pred.check_same_shape(gt, "mse")?;
    let n = pred.data.len().max(1) as f64;
    let mut grad = Image::new(pred.width, pred.height, pred.channels);
    let mut sum = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(&gt.data) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

pub fn loss_geo(pred_rgb: &Image, gt_rgb: &Image) -> Result<f64> {
    mse_with_grad(pred_rgb, gt_rgb).map(|(l, _)| l)
}

/// Same contract as [`loss_geo`], applied to the next keyframe.
pub fn loss_dyna(pred_future_rgb: &Image, gt_future_rgb: &Image) -> Result<f64> {
    mse_with_grad(pred_future_rgb, gt_future_rgb).map(|(l, _)| l)
}

/// One minus the mean per-pixel cosine similarity, with its gradient.
pub fn cosine_with_grad(pred: &Image, gt: &Image) -> Result<(f64, Image)> {
    pred.check_same_shape(gt, "semantic loss")?;
    let pixels = pred.width * pred.height;
    let c = pred.channels;
    let mut grad = Image::new(pred.width, pred.height, c);
    let mut sim_sum = 0.0;
    for i in 0..pixels {
        let p = &pred.data[i * c..(i + 1) * c];
        let g = &gt.data[i * c..(i + 1) * c];
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pn < SEM_EPS || gn < SEM_EPS {
            continue;
        }
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        let cos = dot / (pn * gn);
        sim_sum += cos;
        let out = &mut grad.data[i * c..(i + 1) * c];
        for k in 0..c {
            let dcos = g[k] / (pn * gn) - cos * p[k] / (pn * pn);
            out[k] = -dcos / pixels as f64;
        }
    }
    Ok((1.0 - sim_sum / pixels.max(1) as f64, grad))
}

pub fn loss_sem(pred_feat: &Image, gt_feat: &Image) -> Result<f64> {
    cosine_with_grad(pred_feat, gt_feat).map(|(l, _)| l)
}

/// Cross-entropy of one head; the gradient is `softmax - onehot`.
fn cross_entropy(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let p = softmax(logits);
    for (g, pi) in grad.iter_mut().zip(&p) {
        *g = *pi;
    }
    grad[label] -= 1.0;
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Sum of the six classification cross-entropies, with logit gradients.
pub fn action_loss_with_grad(logits: &ActionLogits, expert: &DiscreteAction) -> Result<(f64, ActionLogits)> {
    let resolution = (logits.translation.len() as f64).cbrt().round() as usize;
    if resolution.pow(3) != logits.translation.len() || logits.rotation.len() != 3 * ROTATION_BINS {
        return Err(Error::shape(
            "action logits",
            format!("cubic translation head and {} rotation scores", 3 * ROTATION_BINS),
            format!("{} and {}", logits.translation.len(), logits.rotation.len()),
        ));
    }
    expert.validate(resolution)?;
    let mut grad = ActionLogits::zeros(resolution);
    let mut loss = cross_entropy(&logits.translation, expert.translation_bin, &mut grad.translation);
    for axis in 0..3 {
        let range = axis * ROTATION_BINS..(axis + 1) * ROTATION_BINS;
        loss += cross_entropy(
            &logits.rotation[range.clone()],
            expert.rotation_bins[axis],
            &mut grad.rotation[range],
        );
    }
    loss += cross_entropy(&logits.openness, expert.openness as usize, &mut grad.openness);
    loss += cross_entropy(&logits.collision, expert.collision as usize, &mut grad.collision);
    Ok((loss, grad))
}

pub fn loss_act(logits: &ActionLogits, expert: &DiscreteAction) -> Result<f64> {
    action_loss_with_grad(logits, expert).map(|(l, _)| l)
}
