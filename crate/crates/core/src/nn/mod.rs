//! Small feed-forward networks with hand-written reverse passes, the
//! optimizers that train them, and a central-difference gradient checker.

mod dense;
mod gradcheck;
mod optim;

pub use dense::{sigmoid, Activation, DenseLayer, Mlp, MlpCache};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use optim::{Algorithm, CosineSchedule, Moments, OptimizerConfig, OptimizerState, StepReport};

use serde::{Deserialize, Serialize};

/// Anything that owns named parameter tensors.
///
/// Gradients are stored in a value of the same type (see `zeros_like`), so a
/// parameter set and its gradient always visit tensors in the same order.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, data| n += data.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, data| out.extend_from_slice(data));
        out
    }

    fn assign_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            data.copy_from_slice(&values[offset..offset + data.len()]);
            offset += data.len();
        });
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, data| data.fill(value));
    }

    fn scale_all(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, data| data.iter_mut().for_each(|v| *v *= factor));
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            for (d, o) in data.iter_mut().zip(&flat[offset..]) {
                *d += o;
            }
            offset += data.len();
        });
    }

    fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, _, data| s += data.iter().map(|v| v * v).sum::<f64>());
        s.sqrt()
    }

    /// `(name, shape)` of every tensor, in visiting order.
    fn tensor_specs(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |name, shape, _| out.push((name.to_string(), shape.to_vec())));
        out
    }
}

/// Storage precision of parameters and optimizer moments. Arithmetic is
/// always carried out in 64-bit; in `F32` mode every stored value is rounded to
/// the nearest 32-bit float after each update so checkpoints hold it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn round(self, data: &mut [f64]) {
        if self == Precision::F32 {
            for v in data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn round_params<P: Params>(self, params: &mut P) {
        if self == Precision::F32 {
            params.visit_mut("", &mut |_, data| Precision::F32.round(data));
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
