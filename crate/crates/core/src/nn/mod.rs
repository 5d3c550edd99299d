//! A small dense/convolutional network engine with exact backpropagation.
//!
//! Batches are `(batch, features)` matrices of `f64`. Layers run in order;
//! [`forward`] records a [`ForwardCache`] that [`backward`] consumes.

mod adam;
mod fold;
mod network;
mod params;
mod spec;

pub use adam::{adam_step, AdamState};
pub use fold::{count_operations, fold_batchnorm, OpCount};
pub use network::{
    backward, forward, forward_prefix, sigmoid, update_running_stats, ForwardCache, Mode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use params::{Gradients, LayerParams, Parameters};
pub use spec::{conv_output_len, LayerSpec, NetworkSpec, Shape};

use ndarray::Array2;
use rand::Rng;

use crate::error::Result;

/// A layout together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl Network {
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let params = Parameters::init(&spec, rng);
        Self { spec, params }
    }

    pub fn from_parts(spec: NetworkSpec, params: Parameters) -> Result<Self> {
        params.check(&spec)?;
        Ok(Self { spec, params })
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        forward(&self.spec, &self.params, input, Mode::Eval).map(|(y, _)| y)
    }

    /// Equivalent network with batchnorm folded into the preceding layers.
    pub fn folded(&self) -> Result<Network> {
        let (spec, params) = fold_batchnorm(&self.spec, &self.params)?;
        Ok(Network { spec, params })
    }
}
