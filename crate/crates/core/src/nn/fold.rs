//! Inference-time rewriting and operation counting.

use serde::{Deserialize, Serialize};

use super::network::BN_EPSILON;
use super::params::{LayerParams, Parameters};
use super::spec::{conv_output_len, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

/// Absorbs every batchnorm layer into the dense or conv layer right before it,
/// using the running statistics.
pub fn fold_batchnorm(
    spec: &NetworkSpec,
    params: &Parameters,
) -> Result<(NetworkSpec, Parameters)> {
    params.check(spec)?;
    let mut layers: Vec<LayerSpec> = Vec::with_capacity(spec.layers.len());
    let mut folded: Vec<LayerParams> = Vec::with_capacity(spec.layers.len());
    for (layer, lp) in spec.layers.iter().zip(&params.layers) {
        let LayerParams::BatchNorm {
            scale,
            shift,
            running_mean,
            running_var,
        } = lp
        else {
            layers.push(layer.clone());
            folded.push(lp.clone());
            continue;
        };
        let previous = folded
            .last_mut()
            .ok_or_else(|| Error::UnsupportedStructure("batchnorm is the first layer".into()))?;
        let (weight, bias) = match previous {
            LayerParams::Dense { weight, bias } | LayerParams::Conv1d { weight, bias } => {
                (weight, bias)
            }
            _ => {
                return Err(Error::UnsupportedStructure(
                    "batchnorm must directly follow a dense or conv layer".into(),
                ))
            }
        };
        for c in 0..scale.len() {
            let factor = scale[c] / (running_var[c] + BN_EPSILON).sqrt();
            weight.row_mut(c).mapv_inplace(|w| w * factor);
            bias[c] = factor * (bias[c] - running_mean[c]) + shift[c];
        }
    }
    let spec = NetworkSpec::new(spec.input, layers)?;
    Ok((spec, Parameters { layers: folded }))
}

/// Real additions and multiplications of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    pub additions: u64,
    pub multiplications: u64,
}

impl std::ops::Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            additions: self.additions + rhs.additions,
            multiplications: self.multiplications + rhs.multiplications,
        }
    }
}

/// Counts arithmetic per sample by walking the layers.
///
/// A dense map `in -> out` costs `out·(in+1)` additions and `in·out`
/// multiplications. A conv layer costs `(kernel+1)` additions and `kernel`
/// multiplications per output position and filter; the sum over input
/// channels is charged as a single kernel window. Activations, flatten and
/// sigmoid are free.
pub fn count_operations(spec: &NetworkSpec) -> Result<OpCount> {
    let shapes = spec.shapes()?;
    let mut total = OpCount::default();
    for (layer, input) in spec.layers.iter().zip(&shapes) {
        let cost = match *layer {
            LayerSpec::Dense { inputs, outputs } => OpCount {
                additions: (outputs * (inputs + 1)) as u64,
                multiplications: (inputs * outputs) as u64,
            },
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
                ..
            } => {
                let positions = conv_output_len(input.len, kernel, stride)
                    .ok_or_else(|| Error::InvalidDimension("conv kernel does not fit".into()))?;
                OpCount {
                    additions: ((kernel + 1) * positions * filters) as u64,
                    multiplications: (kernel * positions * filters) as u64,
                }
            }
            LayerSpec::BatchNorm { .. } => {
                return Err(Error::UnsupportedStructure(
                    "fold batchnorm layers before counting operations".into(),
                ))
            }
            _ => OpCount::default(),
        };
        total = total + cost;
    }
    Ok(total)
}
