//! Finite-difference oracle shared by the gradient and acceptance tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risgan_core::nn::{backward, forward, LayerSpec, Mode, NetworkSpec, Parameters, Shape};

pub const FD_STEP: f64 = 1e-6;

/// Relative error with a floor so that near-zero gradients compare absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central difference of `f` at `x` along one coordinate via the setter.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn weighted_output(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &Array2<f64>,
    w: &Array2<f64>,
) -> f64 {
    let (y, _) = forward(spec, params, x, Mode::Train).unwrap();
    (&y * w).sum()
}

/// Worst relative error between backprop and central differences for the
/// loss `sum(w ⊙ f(x))`, over every learnable value and every input entry.
pub fn network_gradient_error(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &Array2<f64>,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, cache) = forward(spec, params, x, Mode::Train).unwrap();
    let w = Array2::from_shape_fn(y.dim(), |_| rng.random_range(-1.0..1.0));
    let (grads, dx) = backward(spec, params, &cache, &w).unwrap();

    let mut worst = 0.0f64;
    let tensor_count = params.trainable().len();
    for t in 0..tensor_count {
        let len = params.trainable()[t].len();
        for i in 0..len {
            let x0 = params.trainable()[t][i];
            let mut probe = params.clone();
            let numeric = central_difference(
                |v| {
                    probe.trainable_mut()[t][i] = v;
                    weighted_output(spec, &probe, x, &w)
                },
                x0,
            );
            worst = worst.max(rel_err(grads.trainable()[t][i], numeric));
        }
    }
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let mut probe = x.clone();
        let numeric = central_difference(
            |v| {
                probe[(r, c)] = v;
                weighted_output(spec, params, &probe, &w)
            },
            x[(r, c)],
        );
        worst = worst.max(rel_err(dx[(r, c)], numeric));
    }
    worst
}

/// A random single-layer-type network (plus whatever the layer needs
/// around it) for gradient checking.
pub fn random_layer_case(kind: &str, rng: &mut ChaCha8Rng) -> (NetworkSpec, Array2<f64>) {
    let batch = rng.random_range(2..5);
    let spec = match kind {
        "dense" => {
            let i = rng.random_range(1..6);
            let o = rng.random_range(1..6);
            NetworkSpec::new(
                Shape::flat(i),
                vec![LayerSpec::Dense {
                    inputs: i,
                    outputs: o,
                }],
            )
        }
        "conv1d" => {
            let c = rng.random_range(1..4);
            let k = rng.random_range(1..4);
            let s = rng.random_range(1..3);
            let len = k + rng.random_range(0..6);
            NetworkSpec::new(
                Shape::new(c, len),
                vec![LayerSpec::Conv1d {
                    in_channels: c,
                    filters: rng.random_range(1..4),
                    kernel: k,
                    stride: s,
                }],
            )
        }
        "batchnorm" => {
            let c = rng.random_range(1..4);
            let len = rng.random_range(1..4);
            NetworkSpec::new(
                Shape::new(c, len),
                vec![LayerSpec::BatchNorm { features: c }],
            )
        }
        "leaky_relu" => NetworkSpec::new(
            Shape::flat(rng.random_range(1..8)),
            vec![LayerSpec::LeakyRelu { slope: 0.2 }],
        ),
        "flatten" => NetworkSpec::new(
            Shape::new(rng.random_range(1..4), rng.random_range(1..4)),
            vec![LayerSpec::Flatten],
        ),
        "sigmoid" => NetworkSpec::new(
            Shape::flat(rng.random_range(1..8)),
            vec![LayerSpec::Sigmoid],
        ),
        other => panic!("unknown layer kind {other}"),
    }
    .unwrap();
    let x = Array2::from_shape_fn((batch, spec.input_size()), |_| rng.random_range(-2.0..2.0));
    (spec, x)
}

pub const LAYER_KINDS: [&str; 6] = [
    "dense",
    "conv1d",
    "batchnorm",
    "leaky_relu",
    "flatten",
    "sigmoid",
];

/// Randomizes batchnorm scale/shift so their gradients are not trivially
/// symmetric.
pub fn randomized_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Parameters {
    let mut params = Parameters::init(spec, rng);
    for t in params.trainable_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    params
}
