use ndarray::{Array1, Array2};
use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

/// Learnable values and buffers of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `weight` is `(outputs, inputs)`.
    Dense {
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    /// `weight` is `(filters, in_channels * kernel)`, column `ci * kernel + j`.
    Conv1d {
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    BatchNorm {
        scale: Array1<f64>,
        shift: Array1<f64>,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
    },
    Stateless,
}

impl LayerParams {
    /// Glorot-uniform weights, zero biases, identity batchnorm.
    pub fn init<R: Rng + ?Sized>(layer: &LayerSpec, rng: &mut R) -> Self {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                LayerParams::Dense {
                    weight: uniform((outputs, inputs), limit, rng),
                    bias: Array1::zeros(outputs),
                }
            }
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel;
                let fan_out = filters * kernel;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                LayerParams::Conv1d {
                    weight: uniform((filters, fan_in), limit, rng),
                    bias: Array1::zeros(filters),
                }
            }
            LayerSpec::BatchNorm { features } => LayerParams::BatchNorm {
                scale: Array1::ones(features),
                shift: Array1::zeros(features),
                running_mean: Array1::zeros(features),
                running_var: Array1::ones(features),
            },
            _ => LayerParams::Stateless,
        }
    }

    /// Zero-filled parameters for `layer`.
    pub fn zeros_for(layer: &LayerSpec) -> Self {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => LayerParams::Dense {
                weight: Array2::zeros((outputs, inputs)),
                bias: Array1::zeros(outputs),
            },
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => LayerParams::Conv1d {
                weight: Array2::zeros((filters, in_channels * kernel)),
                bias: Array1::zeros(filters),
            },
            LayerSpec::BatchNorm { features } => LayerParams::BatchNorm {
                scale: Array1::zeros(features),
                shift: Array1::zeros(features),
                running_mean: Array1::zeros(features),
                running_var: Array1::zeros(features),
            },
            _ => LayerParams::Stateless,
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            LayerParams::Dense { weight, bias } => LayerParams::Dense {
                weight: Array2::zeros(weight.dim()),
                bias: Array1::zeros(bias.len()),
            },
            LayerParams::Conv1d { weight, bias } => LayerParams::Conv1d {
                weight: Array2::zeros(weight.dim()),
                bias: Array1::zeros(bias.len()),
            },
            LayerParams::BatchNorm { scale, .. } => {
                let n = scale.len();
                LayerParams::BatchNorm {
                    scale: Array1::zeros(n),
                    shift: Array1::zeros(n),
                    running_mean: Array1::zeros(n),
                    running_var: Array1::zeros(n),
                }
            }
            LayerParams::Stateless => LayerParams::Stateless,
        }
    }

    fn matches(&self, layer: &LayerSpec) -> bool {
        match (self, layer) {
            (LayerParams::Dense { weight, bias }, LayerSpec::Dense { inputs, outputs }) => {
                weight.dim() == (*outputs, *inputs) && bias.len() == *outputs
            }
            (
                LayerParams::Conv1d { weight, bias },
                LayerSpec::Conv1d {
                    in_channels,
                    filters,
                    kernel,
                    ..
                },
            ) => weight.dim() == (*filters, in_channels * kernel) && bias.len() == *filters,
            (
                LayerParams::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                },
                LayerSpec::BatchNorm { features },
            ) => [scale, shift, running_mean, running_var]
                .iter()
                .all(|a| a.len() == *features),
            (LayerParams::Stateless, LayerSpec::LeakyRelu { .. })
            | (LayerParams::Stateless, LayerSpec::Flatten)
            | (LayerParams::Stateless, LayerSpec::Sigmoid) => true,
            _ => false,
        }
    }
}

fn uniform<R: Rng + ?Sized>(dim: (usize, usize), limit: f64, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros(dim);
    for v in out.iter_mut() {
        *v = rng.random_range(-limit..limit);
    }
    out
}

/// Parameters of a whole network, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

/// Gradients mirror [`Parameters`]; batchnorm running statistics stay zero.
pub type Gradients = Parameters;

impl Parameters {
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerParams::init(l, rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len()
            || !self
                .layers
                .iter()
                .zip(&spec.layers)
                .all(|(p, l)| p.matches(l))
        {
            return Err(Error::InvalidDimension(
                "parameters do not match the network layout".into(),
            ));
        }
        Ok(())
    }

    /// Learnable tensors in a fixed order (weight, bias / scale, shift).
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv1d { weight, bias } => {
                    out.push(weight.as_slice().expect("standard layout"));
                    out.push(bias.as_slice().expect("standard layout"));
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.push(scale.as_slice().expect("standard layout"));
                    out.push(shift.as_slice().expect("standard layout"));
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv1d { weight, bias } => {
                    out.push(weight.as_slice_mut().expect("standard layout"));
                    out.push(bias.as_slice_mut().expect("standard layout"));
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.push(scale.as_slice_mut().expect("standard layout"));
                    out.push(shift.as_slice_mut().expect("standard layout"));
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Every stored value (including running statistics) in layer order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv1d { weight, bias } => {
                    out.extend(weight.iter());
                    out.extend(bias.iter());
                }
                LayerParams::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                } => {
                    for a in [scale, shift, running_mean, running_var] {
                        out.extend(a.iter());
                    }
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    /// Inverse of [`Parameters::to_flat`] for the given layout.
    pub fn from_flat(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        let mut template = Parameters {
            layers: spec.layers.iter().map(LayerParams::zeros_for).collect(),
        };
        let mut cursor = 0usize;
        let mut take = |dst: &mut [f64]| -> Result<()> {
            let end = cursor + dst.len();
            let src = values.get(cursor..end).ok_or_else(|| {
                Error::Format(format!(
                    "parameter payload too short ({} values)",
                    values.len()
                ))
            })?;
            dst.copy_from_slice(src);
            cursor = end;
            Ok(())
        };
        for layer in &mut template.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv1d { weight, bias } => {
                    take(weight.as_slice_mut().unwrap())?;
                    take(bias.as_slice_mut().unwrap())?;
                }
                LayerParams::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                } => {
                    for a in [scale, shift, running_mean, running_var] {
                        take(a.as_slice_mut().unwrap())?;
                    }
                }
                LayerParams::Stateless => {}
            }
        }
        if cursor != values.len() {
            return Err(Error::Format(format!(
                "parameter payload has {} values, layout needs {cursor}",
                values.len()
            )));
        }
        Ok(template)
    }
}
