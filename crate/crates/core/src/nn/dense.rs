use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{join, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Exp,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Exp => x.exp(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y = f(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Exp => y,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine map followed by a pointwise activation. `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.gen_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Batched forward on rows of `x`; returns `(pre_activation, output)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if x.ncols() != self.inputs() {
            return Err(Error::shape("dense layer input", self.inputs(), x.ncols()));
        }
        let mut pre = x.dot(&self.weights.t());
        pre += &self.bias;
        let act = self.activation;
        let post = pre.mapv(|v| act.apply(v));
        Ok((pre, post))
    }

    /// Given `dL/d(output)`, returns `(dL/dx, dL/dW, dL/db)`.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        pre: &Array2<f64>,
        post: &Array2<f64>,
        grad_out: ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let act = self.activation;
        let mut g_pre = grad_out.to_owned();
        if act != Activation::Identity {
            ndarray::Zip::from(&mut g_pre)
                .and(pre)
                .and(post)
                .for_each(|g, &p, &y| *g *= act.derivative(p, y));
        }
        let g_w = g_pre.t().dot(&x);
        let g_b = g_pre.sum_axis(Axis(0));
        let g_x = g_pre.dot(&self.weights);
        (g_x, g_w, g_b)
    }
}

impl Params for DenseLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(
            &join(prefix, "weight"),
            self.weights.shape(),
            self.weights.as_slice().expect("standard layout"),
        );
        f(&join(prefix, "bias"), self.bias.shape(), self.bias.as_slice().expect("standard layout"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), self.weights.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "bias"), self.bias.as_slice_mut().expect("standard layout"));
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs(), self.activation)
    }
}

/// Stack of dense layers with optional residual additions.
///
/// A residual `(from, to)` adds the output of layer `from` to the output of
/// layer `to` (after `to`'s activation). Both layers must have equal widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub residuals: Vec<(usize, usize)>,
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.input.nrows()
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, residuals: Vec<(usize, usize)>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::shape("mlp layer chain", w[0].outputs(), w[1].inputs()));
            }
        }
        for &(from, to) in &residuals {
            if from >= to || to >= layers.len() {
                return Err(Error::InvalidParameter(format!("bad residual pair ({from}, {to})")));
            }
            if layers[from].outputs() != layers[to].outputs() {
                return Err(Error::shape(
                    format!("residual ({from}, {to})"),
                    layers[from].outputs(),
                    layers[to].outputs(),
                ));
            }
        }
        Ok(Self { layers, residuals })
    }

    /// Builds `widths.len() - 1` Glorot-initialized layers; hidden layers use
    /// `hidden`, the last one `last`.
    pub fn from_widths(widths: &[usize], hidden: Activation, last: Activation, rng: &mut impl Rng) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::new(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self {
            layers,
            residuals: Vec::new(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if input.ncols() != self.input_width() {
            return Err(Error::shape("mlp input", self.input_width(), input.ncols()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (j, layer) in self.layers.iter().enumerate() {
            let x = if j == 0 { input.view() } else { outputs[j - 1].view() };
            let (z, y) = layer.forward(x)?;
            let mut out = y.clone();
            for &(from, to) in &self.residuals {
                if to == j {
                    out += &outputs[from];
                }
            }
            pre.push(z);
            post.push(y);
            outputs.push(out);
        }
        let result = outputs.last().cloned().unwrap_or_else(|| input.to_owned());
        Ok((
            result,
            MlpCache {
                input: input.to_owned(),
                pre,
                post,
                outputs,
            },
        ))
    }

    /// Convenience single-vector forward.
    pub fn forward_vec(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        let (y, cache) = self.forward(x)?;
        Ok((y.into_raw_vec_and_offset().0, cache))
    }

    /// Returns `dL/d(input)` and the parameter gradients (as an `Mlp` of the
    /// same shape).
    pub fn backward(&self, cache: &MlpCache, grad_output: ArrayView2<f64>) -> Result<(Array2<f64>, Mlp)> {
        let stale = cache.pre.len() != self.layers.len()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(z, l)| z.ncols() != l.outputs() || z.nrows() != cache.input.nrows())
            || cache.input.ncols() != self.input_width();
        if stale {
            return Err(Error::shape("mlp cache", "cache from a matching forward", "stale cache"));
        }
        if grad_output.dim() != (cache.batch(), self.output_width()) {
            return Err(Error::shape(
                "mlp grad_output",
                format!("{}x{}", cache.batch(), self.output_width()),
                format!("{}x{}", grad_output.nrows(), grad_output.ncols()),
            ));
        }
        let n = self.layers.len();
        let mut grads = self.zeros_like();
        let mut g_out: Vec<Array2<f64>> = cache.outputs.iter().map(|o| Array2::zeros(o.dim())).collect();
        g_out[n - 1].assign(&grad_output);
        let mut g_input = Array2::zeros(cache.input.dim());
        for j in (0..n).rev() {
            let g = g_out[j].clone();
            for &(from, to) in &self.residuals {
                if to == j {
                    g_out[from] += &g;
                }
            }
            let x = if j == 0 { cache.input.view() } else { cache.outputs[j - 1].view() };
            let (g_x, g_w, g_b) = self.layers[j].backward(x, &cache.pre[j], &cache.post[j], g.view());
            grads.layers[j].weights = g_w;
            grads.layers[j].bias = g_b;
            if j == 0 {
                g_input = g_x;
            } else {
                g_out[j - 1] += &g_x;
            }
        }
        Ok((g_input, grads))
    }

    /// Rows `range` of a batch, for callers that split a cache.
    pub fn slice_rows(a: &Array2<f64>, start: usize, end: usize) -> Array2<f64> {
        a.slice(s![start..end, ..]).to_owned()
    }
}

impl Params for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(DenseLayer::zeros_like).collect(),
            residuals: self.residuals.clone(),
        }
    }
}
