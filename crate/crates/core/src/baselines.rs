//! Comparison estimators: least squares, a fully connected network (FFN) and
//! an extreme learning machine (ELM).

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, SystemConfig};
use crate::dataset::{standardize, unflatten_column_major, unflatten_row_major, Dataset, Link};
use crate::error::{Error, Result};
use crate::metrics::Estimator;
use crate::nn::{
    adam_step, backward, forward, AdamState, LayerParams, LayerSpec, Mode, Network, NetworkSpec,
    Shape,
};
use crate::pilot::{hermitian, PhaseMatrix, PilotMatrix};
use crate::rng::{stream_rng, Stream};

/// `Â = X·Ȳᴴ / P_tx`, from `Âᴴ = Ȳ·Xᴴ / P_tx`.
pub fn ls_sensing(y_avg: &CMatrix, pilots: &PilotMatrix) -> Result<CMatrix> {
    if y_avg.dim() != pilots.x.dim() {
        return Err(Error::InvalidDimension(format!(
            "observation is {:?}, pilots are {:?}",
            y_avg.dim(),
            pilots.x.dim()
        )));
    }
    let a_h = y_avg
        .dot(&hermitian(&pilots.x))
        .mapv(|z| z / pilots.tx_power);
    Ok(hermitian(&a_h))
}

/// `Ĝᴴ = (1/N)·Θ·Y·Xᴴ / P_tx`.
pub fn ls_comm(y_ue: &CMatrix, phases: &PhaseMatrix, pilots: &PilotMatrix) -> Result<CMatrix> {
    let (n, c) = phases.theta.dim();
    if y_ue.nrows() != c || y_ue.ncols() != pilots.x.ncols() {
        return Err(Error::InvalidDimension(format!(
            "observation is {:?}, Theta is {:?}, X is {:?}",
            y_ue.dim(),
            phases.theta.dim(),
            pilots.x.dim()
        )));
    }
    if n != c {
        return Err(Error::InvalidDimension(format!(
            "LS needs a square phase design, got {n}x{c}"
        )));
    }
    let scale = 1.0 / (n as f64 * pilots.tx_power);
    let g_h = phases
        .theta
        .dot(y_ue)
        .dot(&hermitian(&pilots.x))
        .mapv(|z| z * scale);
    Ok(hermitian(&g_h))
}

/// LS applied to raw flattened observations.
#[derive(Debug, Clone)]
pub struct LsEstimator {
    pub config: SystemConfig,
    pub link: Link,
    pilots: PilotMatrix,
    phases: PhaseMatrix,
}

impl LsEstimator {
    pub fn new(config: &SystemConfig, link: Link) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            link,
            pilots: crate::pilot::build_pilot_matrix(
                config.m,
                config.p(),
                config.tx_power_linear(),
            )?,
            phases: crate::pilot::build_phase_matrix(config.n, config.c())?,
        })
    }

    pub fn estimate(&self, raw: &[f64]) -> Result<CMatrix> {
        match self.link {
            Link::Sensing => {
                let y = unflatten_column_major(raw, self.config.m, self.config.p())?;
                ls_sensing(&y, &self.pilots)
            }
            Link::Communication => {
                let y = unflatten_row_major(raw, self.config.c(), self.config.p())?;
                ls_comm(&y, &self.phases, &self.pilots)
            }
        }
    }
}

impl Estimator for LsEstimator {
    fn link(&self) -> Link {
        self.link
    }

    fn estimate_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<CMatrix>> {
        raw.iter().map(|r| self.estimate(r)).collect()
    }
}

pub const BASELINE_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionKind {
    Ffn,
    Elm,
}

/// A learned regression from standardized observations to scaled channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub kind: RegressionKind,
    pub network: Network,
    pub link: Link,
    pub rho: f64,
    pub config: SystemConfig,
    /// Per-epoch training MSE (empty for the ELM).
    pub history: Vec<f64>,
}

impl RegressionModel {
    pub fn predict_scaled(&self, standardized: &Array2<f64>) -> Result<Array2<f64>> {
        self.network.predict(standardized)
    }
}

impl Estimator for RegressionModel {
    fn link(&self) -> Link {
        self.link
    }

    fn estimate_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<CMatrix>> {
        let width = self.network.spec.input_size();
        let mut x = Array2::zeros((raw.len(), width));
        for (i, r) in raw.iter().enumerate() {
            if r.len() != width {
                return Err(Error::InvalidDimension(format!(
                    "observation has {} values, model expects {width}",
                    r.len()
                )));
            }
            let (z, _) = standardize(r)?;
            x.row_mut(i).assign(&Array1::from(z));
        }
        let (rows, cols) = self.link.channel_dim(&self.config);
        self.network
            .predict(&x)?
            .rows()
            .into_iter()
            .map(|row| {
                let o: Vec<f64> = row.iter().map(|v| v / self.rho).collect();
                unflatten_column_major(&o, rows, cols)
            })
            .collect()
    }
}

fn regression_spec(inputs: usize, outputs: usize, hidden_layers: usize) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    let mut width = inputs;
    for _ in 0..hidden_layers {
        layers.push(LayerSpec::Dense {
            inputs: width,
            outputs: BASELINE_HIDDEN,
        });
        layers.push(LayerSpec::LeakyRelu {
            slope: crate::cgan::LEAKY_SLOPE,
        });
        width = BASELINE_HIDDEN;
    }
    layers.push(LayerSpec::Dense {
        inputs: width,
        outputs,
    });
    NetworkSpec::new(Shape::flat(inputs), layers)
}

pub fn ffn_spec(inputs: usize, outputs: usize) -> Result<NetworkSpec> {
    regression_spec(inputs, outputs, 2)
}

pub fn elm_spec(inputs: usize, outputs: usize) -> Result<NetworkSpec> {
    regression_spec(inputs, outputs, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FfnConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 2e-4,
            seed: 0,
        }
    }
}

fn check_dataset(dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    dataset.meta.target_scale.ok_or_else(|| {
        Error::InvalidArgument("dataset must be standardized with scaled targets".into())
    })
}

/// Untrained FFN with the initialization `ffn_baseline` starts from.
pub fn ffn_initial(dataset: &Dataset, config: &FfnConfig) -> Result<RegressionModel> {
    let rho = check_dataset(dataset)?;
    let (x, y) = dataset.all_matrices();
    let mut rng = stream_rng(config.seed, Stream::Baseline, 0);
    Ok(RegressionModel {
        kind: RegressionKind::Ffn,
        network: Network::init(ffn_spec(x.ncols(), y.ncols())?, &mut rng),
        link: dataset.meta.link,
        rho,
        config: dataset.meta.config.clone(),
        history: Vec::new(),
    })
}

/// Trains the FFN with per-element MSE and Adam on a prepared dataset.
pub fn ffn_baseline(dataset: &Dataset, config: &FfnConfig) -> Result<RegressionModel> {
    if config.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    let mut model = ffn_initial(dataset, config)?;
    let (x, y) = dataset.all_matrices();
    let mut adam = AdamState::new(&model.network.params);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(config.seed, Stream::Shuffle, epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let net = &mut model.network;
            let (out, cache) = forward(&net.spec, &net.params, &xb, Mode::Train)?;
            let diff = &out - &yb;
            let count = diff.len() as f64;
            total += diff.iter().map(|d| d * d).sum::<f64>() / count;
            let (grads, _) = backward(
                &net.spec,
                &net.params,
                &cache,
                &diff.mapv(|d| 2.0 * d / count),
            )?;
            adam_step(&mut net.params, &grads, &mut adam, config.lr)?;
            steps += 1;
        }
        model.history.push(total / steps.max(1) as f64);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmConfig {
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            seed: 0,
        }
    }
}

/// Random fixed hidden layer; output weights and bias from the ridge
/// normal equations `(HᵀH/n + λI) β = HᵀY/n`.
pub fn elm_baseline(dataset: &Dataset, config: &ElmConfig) -> Result<RegressionModel> {
    let rho = check_dataset(dataset)?;
    if !(config.lambda >= 0.0) {
        return Err(Error::config("elm_lambda", "must be nonnegative"));
    }
    let (x, y) = dataset.all_matrices();
    let mut rng = stream_rng(config.seed, Stream::Baseline, 1);
    let mut network = Network::init(elm_spec(x.ncols(), y.ncols())?, &mut rng);

    let hidden_layers = network.spec.layers.len() - 1;
    let hidden_spec = NetworkSpec::new(
        network.spec.input,
        network.spec.layers[..hidden_layers].to_vec(),
    )?;
    let hidden_params = crate::nn::Parameters {
        layers: network.params.layers[..hidden_layers].to_vec(),
    };
    let (h, _) = forward(&hidden_spec, &hidden_params, &x, Mode::Eval)?;

    let n = h.nrows() as f64;
    let width = h.ncols() + 1;
    let mut design = Array2::ones((h.nrows(), width));
    design.slice_mut(ndarray::s![.., ..h.ncols()]).assign(&h);
    let gram = design.t().dot(&design) / n;
    let rhs = design.t().dot(&y) / n;
    let mut a = DMatrix::from_fn(width, width, |i, j| gram[(i, j)]);
    for i in 0..width {
        a[(i, i)] += config.lambda;
    }
    let b = DMatrix::from_fn(width, y.ncols(), |i, j| rhs[(i, j)]);
    let beta = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::DegenerateInput("ELM normal equations are singular".into()))?,
    };

    if let Some(LayerParams::Dense { weight, bias }) = network.params.layers.last_mut() {
        for o in 0..y.ncols() {
            for i in 0..h.ncols() {
                weight[(o, i)] = beta[(i, o)];
            }
            bias[o] = beta[(h.ncols(), o)];
        }
    }
    Ok(RegressionModel {
        kind: RegressionKind::Elm,
        network,
        link: dataset.meta.link,
        rho,
        config: dataset.meta.config.clone(),
        history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::build_pilot_matrix;
    use num_complex::Complex64;

    #[test]
    fn scalar_sensing_ls() {
        let x = build_pilot_matrix(1, 1, 0.5).unwrap();
        let y = CMatrix::from_elem((1, 1), Complex64::new(0.3, -0.2));
        let a = ls_sensing(&y, &x).unwrap();
        let xs = x.x[(0, 0)];
        let expected = (y[(0, 0)] * xs.conj() / xs.norm_sqr()).conj();
        assert!((a[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn scalar_comm_ls() {
        let x = build_pilot_matrix(1, 1, 2.0).unwrap();
        let phases = crate::pilot::build_phase_matrix(1, 1).unwrap();
        let g = Complex64::new(-0.4, 0.9);
        let y = CMatrix::from_elem((1, 1), g.conj() * x.x[(0, 0)]);
        let est = ls_comm(&y, &phases, &x).unwrap();
        assert!((est[(0, 0)] - g).norm() < 1e-15);
    }

    #[test]
    fn baseline_layouts() {
        let f = ffn_spec(32, 32).unwrap();
        assert_eq!(f.layers.len(), 5);
        assert_eq!(f.output_size(), 32);
        let e = elm_spec(240, 240).unwrap();
        assert_eq!(e.layers.len(), 3);
    }
}
