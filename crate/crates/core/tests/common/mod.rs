#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratebench_core::engine::model::{flatten_gradients, loss_and_gradients, losses, Init};
use ratebench_core::engine::{init_model, ModelSpec};

/// Max relative error between the analytic gradient and central differences
/// for one random model and batch.
pub fn gradient_check(spec: &ModelSpec, dim: usize, classes: usize, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = spec.clone().with_init(Init::Gaussian { sigma: 0.5 });
    let mut model = init_model(&spec, dim, classes, seed).unwrap();
    // Non-zero biases so every coordinate is exercised.
    let mut flat = model.flatten();
    for v in flat.iter_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    model.set_flat(&flat);
    let x = Array2::from_shape_fn((batch, dim), |_| rng.random_range(0.0..1.0));
    let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();

    let (_, grads) = loss_and_gradients(&model, x.view(), &y).unwrap();
    let analytic = flatten_gradients(&grads);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut probe = model.clone();
        let mut p = flat.clone();
        p[i] += h;
        probe.set_flat(&p);
        let up = losses(&probe, x.view(), &y).unwrap().1;
        p[i] -= 2.0 * h;
        probe.set_flat(&p);
        let down = losses(&probe, x.view(), &y).unwrap().1;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Random small configuration for `gradient_check`: (dim, classes, batch, weight decay).
pub fn random_shape(seed: u64) -> (usize, usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dim = rng.random_range(2..7);
    let classes = rng.random_range(2..6);
    let batch = rng.random_range(1..9);
    let wd = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.01) };
    (dim, classes, batch, wd)
}
