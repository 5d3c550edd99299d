use ndarray::{s, Array1, Array2, Axis};

use super::params::{Gradients, LayerParams, Parameters};
use super::spec::{LayerSpec, NetworkSpec, Shape};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm uses the statistics of the current batch.
    Train,
    /// Batchnorm uses the running statistics.
    Eval,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Conv {
        cols: Array2<f64>,
    },
    BatchNorm {
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
        mean: Array1<f64>,
        var: Array1<f64>,
        count: usize,
    },
    Sigmoid {
        out: Array2<f64>,
    },
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    shapes: Vec<Shape>,
    inputs: Vec<Array2<f64>>,
    aux: Vec<Aux>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layer_count(&self) -> usize {
        self.aux.len()
    }
}

/// Runs all layers of `spec` on a `(batch, features)` input.
pub fn forward(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &Array2<f64>,
    mode: Mode,
) -> Result<(Array2<f64>, ForwardCache)> {
    forward_prefix(spec, params, input, mode, spec.layers.len())
}

/// Runs only the first `layers` layers.
pub fn forward_prefix(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &Array2<f64>,
    mode: Mode,
    layers: usize,
) -> Result<(Array2<f64>, ForwardCache)> {
    params.check(spec)?;
    if layers > spec.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "network has {} layers, asked for {layers}",
            spec.layers.len()
        )));
    }
    let shapes = spec.shapes()?;
    if input.ncols() != spec.input_size() {
        return Err(Error::InvalidDimension(format!(
            "network expects {} inputs per sample, got {}",
            spec.input_size(),
            input.ncols()
        )));
    }
    if input.nrows() == 0 {
        return Err(Error::InvalidDimension("empty batch".into()));
    }

    let mut inputs = Vec::with_capacity(layers);
    let mut aux = Vec::with_capacity(layers);
    let mut x = input.to_owned();
    for (i, (layer, lp)) in spec.layers[..layers].iter().zip(&params.layers).enumerate() {
        let (y, a) = layer_forward(layer, lp, shapes[i], shapes[i + 1], &x, mode);
        inputs.push(x);
        aux.push(a);
        x = y;
    }
    Ok((
        x,
        ForwardCache {
            mode,
            shapes: shapes[..=layers].to_vec(),
            inputs,
            aux,
        },
    ))
}

fn layer_forward(
    layer: &LayerSpec,
    params: &LayerParams,
    in_shape: Shape,
    out_shape: Shape,
    x: &Array2<f64>,
    mode: Mode,
) -> (Array2<f64>, Aux) {
    let batch = x.nrows();
    match (layer, params) {
        (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
            let y = x.dot(&weight.t()) + bias;
            (y, Aux::None)
        }
        (LayerSpec::Conv1d { kernel, stride, .. }, LayerParams::Conv1d { weight, bias }) => {
            let cols = im2col(x, in_shape, *kernel, *stride, out_shape.len);
            let rows = cols.dot(&weight.t()) + bias;
            let mut y = Array2::zeros((batch, out_shape.size()));
            for b in 0..batch {
                for t in 0..out_shape.len {
                    let src = rows.row(b * out_shape.len + t);
                    for (f, v) in src.iter().enumerate() {
                        y[(b, f * out_shape.len + t)] = *v;
                    }
                }
            }
            (y, Aux::Conv { cols })
        }
        (
            LayerSpec::BatchNorm { .. },
            LayerParams::BatchNorm {
                scale,
                shift,
                running_mean,
                running_var,
            },
        ) => {
            let channels = in_shape.channels;
            let len = in_shape.len;
            let count = batch * len;
            let (mean, var) = match mode {
                Mode::Train => channel_moments(x, channels, len),
                Mode::Eval => (running_mean.clone(), running_var.clone()),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let mut xhat = Array2::zeros(x.dim());
            let mut y = Array2::zeros(x.dim());
            for c in 0..channels {
                let cols = s![.., c * len..(c + 1) * len];
                let (mu, is) = (mean[c], inv_std[c]);
                let (g, bt) = (scale[c], shift[c]);
                ndarray::Zip::from(xhat.slice_mut(cols))
                    .and(y.slice_mut(cols))
                    .and(x.slice(cols))
                    .for_each(|h, o, &v| {
                        *h = (v - mu) * is;
                        *o = g * *h + bt;
                    });
            }
            (
                y,
                Aux::BatchNorm {
                    xhat,
                    inv_std,
                    mean,
                    var,
                    count,
                },
            )
        }
        (LayerSpec::LeakyRelu { slope }, _) => {
            let slope = *slope;
            (x.mapv(|v| if v > 0.0 { v } else { slope * v }), Aux::None)
        }
        (LayerSpec::Flatten, _) => (x.clone(), Aux::None),
        (LayerSpec::Sigmoid, _) => {
            let out = x.mapv(sigmoid);
            (out.clone(), Aux::Sigmoid { out })
        }
        _ => unreachable!("parameters were checked against the layout"),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-channel mean and biased variance over batch and positions.
fn channel_moments(x: &Array2<f64>, channels: usize, len: usize) -> (Array1<f64>, Array1<f64>) {
    let count = (x.nrows() * len) as f64;
    let mut mean = Array1::zeros(channels);
    let mut var = Array1::zeros(channels);
    for c in 0..channels {
        let block = x.slice(s![.., c * len..(c + 1) * len]);
        let mu = block.sum() / count;
        let v = block.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / count;
        mean[c] = mu;
        var[c] = v;
    }
    (mean, var)
}

/// Rows are `(sample, position)`, columns `(channel, tap)`.
fn im2col(
    x: &Array2<f64>,
    shape: Shape,
    kernel: usize,
    stride: usize,
    out_len: usize,
) -> Array2<f64> {
    let batch = x.nrows();
    let mut cols = Array2::zeros((batch * out_len, shape.channels * kernel));
    for b in 0..batch {
        let sample = x.row(b);
        for t in 0..out_len {
            let mut row = cols.row_mut(b * out_len + t);
            for ci in 0..shape.channels {
                let base = ci * shape.len + t * stride;
                for j in 0..kernel {
                    row[ci * kernel + j] = sample[base + j];
                }
            }
        }
    }
    cols
}

/// Gradients of a scalar loss with respect to every learnable tensor and to
/// the network input, given the loss gradient at the output of the layers
/// covered by `cache`.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    cache: &ForwardCache,
    output_gradient: &Array2<f64>,
) -> Result<(Gradients, Array2<f64>)> {
    params.check(spec)?;
    let layers = cache.layer_count();
    if layers > spec.layers.len() || cache.shapes.len() != layers + 1 {
        return Err(Error::InvalidArgument(
            "cache does not match this network".into(),
        ));
    }
    let out_shape = cache.shapes[layers];
    let batch = cache
        .inputs
        .first()
        .map(|x| x.nrows())
        .unwrap_or(output_gradient.nrows());
    if output_gradient.dim() != (batch, out_shape.size()) {
        return Err(Error::InvalidDimension(format!(
            "output gradient is {:?}, expected ({batch}, {})",
            output_gradient.dim(),
            out_shape.size()
        )));
    }

    let mut grads = params.zeros_like();
    let mut delta = output_gradient.to_owned();
    for i in (0..layers).rev() {
        delta = layer_backward(
            &spec.layers[i],
            &params.layers[i],
            &mut grads.layers[i],
            cache,
            i,
            &delta,
        );
    }
    Ok((grads, delta))
}

fn layer_backward(
    layer: &LayerSpec,
    params: &LayerParams,
    grads: &mut LayerParams,
    cache: &ForwardCache,
    index: usize,
    delta: &Array2<f64>,
) -> Array2<f64> {
    let x = &cache.inputs[index];
    let in_shape = cache.shapes[index];
    let out_shape = cache.shapes[index + 1];
    let batch = x.nrows();
    match (layer, params, grads, &cache.aux[index]) {
        (
            LayerSpec::Dense { .. },
            LayerParams::Dense { weight, .. },
            LayerParams::Dense {
                weight: gw,
                bias: gb,
            },
            _,
        ) => {
            *gw = delta.t().dot(x);
            *gb = delta.sum_axis(Axis(0));
            delta.dot(weight)
        }
        (
            LayerSpec::Conv1d { kernel, stride, .. },
            LayerParams::Conv1d { weight, .. },
            LayerParams::Conv1d {
                weight: gw,
                bias: gb,
            },
            Aux::Conv { cols },
        ) => {
            let out_len = out_shape.len;
            let filters = out_shape.channels;
            let mut drows = Array2::zeros((batch * out_len, filters));
            for b in 0..batch {
                for f in 0..filters {
                    for t in 0..out_len {
                        drows[(b * out_len + t, f)] = delta[(b, f * out_len + t)];
                    }
                }
            }
            *gw = drows.t().dot(cols);
            *gb = drows.sum_axis(Axis(0));
            let dcols = drows.dot(weight);
            let mut dx = Array2::zeros(x.dim());
            for b in 0..batch {
                for t in 0..out_len {
                    let row = dcols.row(b * out_len + t);
                    for ci in 0..in_shape.channels {
                        let base = ci * in_shape.len + t * stride;
                        for j in 0..*kernel {
                            dx[(b, base + j)] += row[ci * kernel + j];
                        }
                    }
                }
            }
            dx
        }
        (
            LayerSpec::BatchNorm { .. },
            LayerParams::BatchNorm { scale, .. },
            LayerParams::BatchNorm {
                scale: gs,
                shift: gt,
                ..
            },
            Aux::BatchNorm {
                xhat,
                inv_std,
                count,
                ..
            },
        ) => {
            let len = in_shape.len;
            let n = *count as f64;
            let mut dx = Array2::zeros(x.dim());
            for c in 0..in_shape.channels {
                let cols = s![.., c * len..(c + 1) * len];
                let dy = delta.slice(cols);
                let xh = xhat.slice(cols);
                let sum_dy = dy.sum();
                let sum_dy_xhat = ndarray::Zip::from(&dy)
                    .and(&xh)
                    .fold(0.0, |acc, &d, &h| acc + d * h);
                gs[c] = sum_dy_xhat;
                gt[c] = sum_dy;
                let g = scale[c];
                let is = inv_std[c];
                match cache.mode {
                    Mode::Train => {
                        ndarray::Zip::from(dx.slice_mut(cols))
                            .and(&dy)
                            .and(&xh)
                            .for_each(|o, &d, &h| {
                                *o = g * is / n * (n * d - sum_dy - h * sum_dy_xhat);
                            });
                    }
                    Mode::Eval => {
                        ndarray::Zip::from(dx.slice_mut(cols))
                            .and(&dy)
                            .for_each(|o, &d| *o = g * is * d);
                    }
                }
            }
            dx
        }
        (LayerSpec::LeakyRelu { slope }, ..) => {
            let mut dx = delta.to_owned();
            ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
                if v <= 0.0 {
                    *d *= slope;
                }
            });
            dx
        }
        (LayerSpec::Flatten, ..) => delta.to_owned(),
        (LayerSpec::Sigmoid, _, _, Aux::Sigmoid { out }) => {
            let mut dx = delta.to_owned();
            ndarray::Zip::from(&mut dx)
                .and(out)
                .for_each(|d, &y| *d *= y * (1.0 - y));
            dx
        }
        _ => unreachable!("cache was produced by this layout"),
    }
}

/// Folds the batch statistics of a train-mode pass into the running
/// statistics with momentum [`BN_MOMENTUM`].
pub fn update_running_stats(params: &mut Parameters, cache: &ForwardCache) -> Result<()> {
    if cache.mode != Mode::Train {
        return Err(Error::InvalidArgument(
            "running statistics need a train-mode cache".into(),
        ));
    }
    for (lp, aux) in params.layers.iter_mut().zip(&cache.aux) {
        if let (
            LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            },
            Aux::BatchNorm {
                mean, var, count, ..
            },
        ) = (lp, aux)
        {
            let n = *count as f64;
            let unbiased = if *count > 1 { n / (n - 1.0) } else { 1.0 };
            running_mean.zip_mut_with(mean, |r, &m| {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            });
            running_var.zip_mut_with(var, |r, &v| {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbiased;
            });
        }
    }
    Ok(())
}
