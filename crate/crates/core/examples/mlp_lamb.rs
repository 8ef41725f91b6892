//! Fits a small MLP to a 2D function with each of the three optimizers.
//!
//! cargo run --release --example mlp_lamb -- [steps]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatworld::nn::{Activation, Mlp, OptimizerConfig, OptimizerState, Params};
use splatworld::nn::Algorithm;

fn target(x: f64, y: f64) -> f64 {
    (3.0 * x).sin() * (2.0 * y).cos()
}

fn main() -> splatworld::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 256;
    let mut x = Array2::zeros((n, 2));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        x[[i, 0]] = a;
        x[[i, 1]] = b;
        y[[i, 0]] = target(a, b);
    }
    for (algorithm, lr) in [(Algorithm::Sgd, 0.05), (Algorithm::Adam, 3e-3), (Algorithm::Lamb, 1e-2)] {
        let mut net = Mlp::from_widths(&[2, 32, 32, 1], Activation::Tanh, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(0));
        let mut opt = OptimizerState::new(OptimizerConfig {
            algorithm,
            learning_rate: lr,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        });
        let mut mse = 0.0;
        for _ in 0..steps {
            let (pred, cache) = net.forward(x.view())?;
            let diff = &pred - &y;
            mse = diff.mapv(|d| d * d).mean().unwrap_or(0.0);
            let grad_out = diff.mapv(|d| 2.0 * d / n as f64);
            let (_, grads) = net.backward(&cache, grad_out.view())?;
            opt.step(&mut net, &grads, lr, &|_| false)?;
        }
        println!("{algorithm:?}: mse {mse:.5} after {steps} steps ({} parameters)", net.param_count());
    }
    Ok(())
}
