use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation shape of one sample: `channels` feature maps of length `len`.
/// Dense activations are `(features, 1)`. Samples are stored channel-major,
/// so entry `(c, t)` sits at flat index `c * len + t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn flat(features: usize) -> Self {
        Self {
            channels: features,
            len: 1,
        }
    }

    pub fn new(channels: usize, len: usize) -> Self {
        Self { channels, len }
    }

    pub fn size(&self) -> usize {
        self.channels * self.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) 1-D convolution.
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// Per-channel normalization over batch and positions.
    BatchNorm {
        features: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Flatten,
    Sigmoid,
}

/// `floor((len - kernel) / stride) + 1`, or `None` if the kernel does not fit.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || kernel > len {
        return None;
    }
    Some((len - kernel) / stride + 1)
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidDimension(
                        "dense layer with zero width".into(),
                    ));
                }
                if input.len != 1 || input.channels != inputs {
                    return Err(Error::InvalidDimension(format!(
                        "dense layer expects {inputs} flat features, got {input:?}"
                    )));
                }
                Ok(Shape::flat(outputs))
            }
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
            } => {
                if in_channels == 0 || filters == 0 {
                    return Err(Error::InvalidDimension(
                        "conv layer with zero channels".into(),
                    ));
                }
                if input.channels != in_channels {
                    return Err(Error::InvalidDimension(format!(
                        "conv layer expects {in_channels} channels, got {}",
                        input.channels
                    )));
                }
                let len = conv_output_len(input.len, kernel, stride).ok_or_else(|| {
                    Error::InvalidDimension(format!(
                        "kernel {kernel} / stride {stride} does not fit input length {}",
                        input.len
                    ))
                })?;
                Ok(Shape::new(filters, len))
            }
            LayerSpec::BatchNorm { features } => {
                if features != input.channels {
                    return Err(Error::InvalidDimension(format!(
                        "batchnorm over {features} features, input has {} channels",
                        input.channels
                    )));
                }
                Ok(input)
            }
            LayerSpec::LeakyRelu { slope } => {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "leaky relu slope must lie in (0, 1), got {slope}"
                    )));
                }
                Ok(input)
            }
            LayerSpec::Flatten => Ok(Shape::flat(input.size())),
            LayerSpec::Sigmoid => Ok(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Activation shapes, starting with the input and ending with the output.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.size() == 0 {
            return Err(Error::InvalidDimension("network input is empty".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn output_size(&self) -> usize {
        self.shapes().map(|s| s.last().unwrap().size()).unwrap_or(0)
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::BatchNorm { .. }))
    }
}
