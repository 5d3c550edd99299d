//! Conditional GAN channel estimators for the sensing link (dense SE-CGAN)
//! and the communication link (convolutional CE-CGAN).

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, SystemConfig};
use crate::dataset::{standardize, unflatten_column_major, Dataset, Link};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, forward_prefix, update_running_stats, AdamState, LayerSpec, Mode,
    Network, NetworkSpec, Parameters, Shape,
};
use crate::rng::{stream_rng, Stream};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const CE_FILTERS: usize = 132;
pub const CE_KERNEL: usize = 4;
pub const CE_STRIDE: usize = 1;
pub const CE_HIDDEN: usize = 500;
pub const SE_HIDDEN: [usize; 2] = [100, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub alpha: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            alpha: 100.0,
            lr_generator: 2e-4,
            lr_discriminator: 2e-5,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be nonnegative"));
        }
        for (key, lr) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config(key, "must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Losses averaged over the minibatches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub discriminator_loss: f64,
    pub generator_loss: f64,
    /// Per-element MSE of the generator against the scaled targets.
    pub generator_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CganModel {
    pub generator: Network,
    pub discriminator: Network,
    pub link: Link,
    pub rho: f64,
    pub config: SystemConfig,
    pub history: Vec<EpochStats>,
}

fn dense_block(inputs: usize, outputs: usize) -> [LayerSpec; 3] {
    [
        LayerSpec::Dense { inputs, outputs },
        LayerSpec::BatchNorm { features: outputs },
        LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
    ]
}

fn conv_block(in_channels: usize) -> [LayerSpec; 4] {
    [
        LayerSpec::Conv1d {
            in_channels,
            filters: CE_FILTERS,
            kernel: CE_KERNEL,
            stride: CE_STRIDE,
        },
        LayerSpec::BatchNorm {
            features: CE_FILTERS,
        },
        LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
        LayerSpec::Flatten,
    ]
}

fn se_network(inputs: usize, outputs: usize) -> Result<NetworkSpec> {
    let [h1, h2] = SE_HIDDEN;
    let mut layers = Vec::new();
    layers.extend(dense_block(inputs, h1));
    layers.extend(dense_block(h1, h2));
    layers.push(LayerSpec::Dense {
        inputs: h2,
        outputs,
    });
    NetworkSpec::new(Shape::flat(inputs), layers)
}

pub fn se_generator_spec(config: &SystemConfig) -> Result<NetworkSpec> {
    se_network(2 * config.m * config.p(), 2 * config.m * config.m)
}

pub fn se_discriminator_spec(config: &SystemConfig) -> Result<NetworkSpec> {
    let mut spec = se_network(2 * config.m * config.m, 1)?;
    spec.layers.push(LayerSpec::Sigmoid);
    Ok(spec)
}

/// Convolution along `positions`, then the dense head.
fn ce_network(channels: usize, positions: usize, outputs: usize) -> Result<NetworkSpec> {
    if positions < CE_KERNEL {
        return Err(Error::UnsupportedConfiguration(format!(
            "convolution kernel {CE_KERNEL} exceeds the {positions} available positions"
        )));
    }
    let conv_len = crate::nn::conv_output_len(positions, CE_KERNEL, CE_STRIDE)
        .expect("kernel fits, checked above");
    let mut layers = Vec::new();
    layers.extend(conv_block(channels));
    layers.extend(dense_block(conv_len * CE_FILTERS, CE_HIDDEN));
    layers.push(LayerSpec::Dense {
        inputs: CE_HIDDEN,
        outputs,
    });
    NetworkSpec::new(Shape::new(channels, positions), layers)
}

/// Input: `C` sub-frame positions with `2P` channels (Re and Im per slot).
pub fn ce_generator_spec(config: &SystemConfig) -> Result<NetworkSpec> {
    ce_network(2 * config.p(), config.c(), 2 * config.m * config.n)
}

/// Input: the `N` RIS columns of `G` as positions with `2M` channels.
pub fn ce_discriminator_spec(config: &SystemConfig) -> Result<NetworkSpec> {
    let mut spec = ce_network(2 * config.m, config.n, 1)?;
    spec.layers.push(LayerSpec::Sigmoid);
    Ok(spec)
}

pub fn build_se_cgan<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<CganModel> {
    config.validate()?;
    build(
        config,
        Link::Sensing,
        se_generator_spec(config)?,
        se_discriminator_spec(config)?,
        rng,
    )
}

pub fn build_ce_cgan<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<CganModel> {
    config.validate()?;
    build(
        config,
        Link::Communication,
        ce_generator_spec(config)?,
        ce_discriminator_spec(config)?,
        rng,
    )
}

pub fn build_cgan<R: Rng + ?Sized>(
    config: &SystemConfig,
    link: Link,
    rng: &mut R,
) -> Result<CganModel> {
    match link {
        Link::Sensing => build_se_cgan(config, rng),
        Link::Communication => build_ce_cgan(config, rng),
    }
}

fn build<R: Rng + ?Sized>(
    config: &SystemConfig,
    link: Link,
    g: NetworkSpec,
    d: NetworkSpec,
    rng: &mut R,
) -> Result<CganModel> {
    let generator = Network::init(g, rng);
    let discriminator = Network::init(d, rng);
    Ok(CganModel {
        generator,
        discriminator,
        link,
        rho: config.rho,
        config: config.clone(),
        history: Vec::new(),
    })
}

/// `perm[i]` is the raw-vector index feeding network position `i`.
///
/// Sensing vectors are used as they are. Communication inputs are regrouped
/// from `[Re(c, p)..., Im(c, p)...]` (sub-frame-major) into channel-major
/// `(2P channels) x (C positions)`; targets from `[Re vec(G), Im vec(G)]`
/// into `(2M channels) x (N positions)`.
pub fn input_permutation(link: Link, config: &SystemConfig) -> Vec<usize> {
    match link {
        Link::Sensing => (0..link.input_len(config)).collect(),
        Link::Communication => {
            let (c, p) = (config.c(), config.p());
            let mut perm = Vec::with_capacity(2 * c * p);
            for ch in 0..2 * p {
                let (half, slot) = (ch / p, ch % p);
                for pos in 0..c {
                    perm.push(half * c * p + pos * p + slot);
                }
            }
            perm
        }
    }
}

pub fn target_permutation(link: Link, config: &SystemConfig) -> Vec<usize> {
    match link {
        Link::Sensing => (0..link.target_len(config)).collect(),
        Link::Communication => {
            let (m, n) = (config.m, config.n);
            let mut perm = Vec::with_capacity(2 * m * n);
            for ch in 0..2 * m {
                let (half, row) = (ch / m, ch % m);
                for col in 0..n {
                    perm.push(half * m * n + col * m + row);
                }
            }
            perm
        }
    }
}

fn arrange(values: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| values[i]).collect()
}

fn unarrange(values: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (v, &i) in values.iter().zip(perm) {
        out[i] = *v;
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::nn::sigmoid(x)
}

/// Loss value and its gradients with respect to the discriminator logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorLoss {
    pub value: f64,
    pub grad_real: Vec<f64>,
    pub grad_fake: Vec<f64>,
}

/// `L_D = ½ Σ_j [−log σ(z_real_j) − log(1 − σ(z_fake_j))]` from
/// pre-sigmoid scores.
pub fn discriminator_loss(real_logits: &[f64], fake_logits: &[f64]) -> Result<DiscriminatorLoss> {
    if real_logits.len() != fake_logits.len() {
        return Err(Error::InvalidDimension(format!(
            "{} real scores vs {} fake scores",
            real_logits.len(),
            fake_logits.len()
        )));
    }
    let value = 0.5
        * real_logits
            .iter()
            .zip(fake_logits)
            .map(|(&r, &f)| softplus(-r) + softplus(f))
            .sum::<f64>();
    Ok(DiscriminatorLoss {
        value,
        grad_real: real_logits.iter().map(|&r| -0.5 * sigmoid(-r)).collect(),
        grad_fake: fake_logits.iter().map(|&f| 0.5 * sigmoid(f)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorLoss {
    pub value: f64,
    pub adversarial: f64,
    pub mse: f64,
    pub grad_logits: Vec<f64>,
    /// Gradient of the L2 term with respect to the generator output.
    pub grad_output: Array2<f64>,
}

/// `−(1/b) Σ_j log σ(z_j) + α · mean((target − output)²)`.
pub fn generator_loss(
    fake_logits: &[f64],
    output: &Array2<f64>,
    target: &Array2<f64>,
    alpha: f64,
) -> Result<GeneratorLoss> {
    if output.dim() != target.dim() || output.nrows() != fake_logits.len() {
        return Err(Error::InvalidDimension(format!(
            "output {:?}, target {:?}, {} scores",
            output.dim(),
            target.dim(),
            fake_logits.len()
        )));
    }
    let b = fake_logits.len().max(1) as f64;
    let count = output.len().max(1) as f64;
    let adversarial = fake_logits.iter().map(|&z| softplus(-z)).sum::<f64>() / b;
    let diff = output - target;
    let mse = diff.iter().map(|d| d * d).sum::<f64>() / count;
    Ok(GeneratorLoss {
        value: adversarial + alpha * mse,
        adversarial,
        mse,
        grad_logits: fake_logits.iter().map(|&z| -sigmoid(-z) / b).collect(),
        grad_output: diff.mapv(|d| 2.0 * alpha * d / count),
    })
}

/// Layers of the discriminator before its final sigmoid.
fn logit_layers(d: &Network) -> usize {
    match d.spec.layers.last() {
        Some(LayerSpec::Sigmoid) => d.spec.layers.len() - 1,
        _ => d.spec.layers.len(),
    }
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

fn add_grads(a: &mut Parameters, b: &Parameters) {
    for (x, y) in a.trainable_mut().into_iter().zip(b.trainable()) {
        for (u, v) in x.iter_mut().zip(y) {
            *u += v;
        }
    }
}

/// Gradient of the full generator objective, for checking.
///
/// Runs the generator and the (frozen) discriminator in train mode and returns
/// the objective value with the generator parameter gradients.
pub fn generator_objective(
    model: &CganModel,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    alpha: f64,
) -> Result<(f64, Parameters)> {
    let g = &model.generator;
    let d = &model.discriminator;
    let (out, g_cache) = forward(&g.spec, &g.params, inputs, Mode::Train)?;
    let (z, d_cache) = forward_prefix(&d.spec, &d.params, &out, Mode::Train, logit_layers(d))?;
    let loss = generator_loss(&z.column(0).to_vec(), &out, targets, alpha)?;
    let (_, through_d) = backward(&d.spec, &d.params, &d_cache, &column(&loss.grad_logits))?;
    let (grads, _) = backward(
        &g.spec,
        &g.params,
        &g_cache,
        &(through_d + &loss.grad_output),
    )?;
    Ok((loss.value, grads))
}

/// Optimizer state carried across steps.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub adam_generator: AdamState,
    pub adam_discriminator: AdamState,
}

impl TrainerState {
    pub fn new(model: &CganModel) -> Self {
        Self {
            adam_generator: AdamState::new(&model.generator.params),
            adam_discriminator: AdamState::new(&model.discriminator.params),
        }
    }
}

/// One discriminator update followed by one generator update on a minibatch
/// of arranged inputs and targets.
pub fn train_step(
    model: &mut CganModel,
    state: &mut TrainerState,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    config: &TrainConfig,
) -> Result<EpochStats> {
    let d_layers = logit_layers(&model.discriminator);

    let g = &mut model.generator;
    let (fake, g_cache) = forward(&g.spec, &g.params, inputs, Mode::Train)?;
    update_running_stats(&mut g.params, &g_cache)?;

    let d = &mut model.discriminator;
    let (z_real, real_cache) = forward_prefix(&d.spec, &d.params, targets, Mode::Train, d_layers)?;
    let (z_fake, fake_cache) = forward_prefix(&d.spec, &d.params, &fake, Mode::Train, d_layers)?;
    let d_loss = discriminator_loss(&z_real.column(0).to_vec(), &z_fake.column(0).to_vec())?;
    let (mut d_grads, _) = backward(&d.spec, &d.params, &real_cache, &column(&d_loss.grad_real))?;
    let (fake_grads, _) = backward(&d.spec, &d.params, &fake_cache, &column(&d_loss.grad_fake))?;
    add_grads(&mut d_grads, &fake_grads);
    adam_step(
        &mut d.params,
        &d_grads,
        &mut state.adam_discriminator,
        config.lr_discriminator,
    )?;
    update_running_stats(&mut d.params, &real_cache)?;

    let (z_fake, fake_cache) = forward_prefix(&d.spec, &d.params, &fake, Mode::Train, d_layers)?;
    let g_loss = generator_loss(&z_fake.column(0).to_vec(), &fake, targets, config.alpha)?;
    let (_, through_d) = backward(
        &d.spec,
        &d.params,
        &fake_cache,
        &column(&g_loss.grad_logits),
    )?;
    let g = &mut model.generator;
    let (g_grads, _) = backward(
        &g.spec,
        &g.params,
        &g_cache,
        &(through_d + &g_loss.grad_output),
    )?;
    adam_step(
        &mut g.params,
        &g_grads,
        &mut state.adam_generator,
        config.lr_generator,
    )?;

    Ok(EpochStats {
        discriminator_loss: d_loss.value,
        generator_loss: g_loss.value,
        generator_mse: g_loss.mse,
    })
}

impl CganModel {
    /// Arranged `(inputs, targets)` matrices of a prepared dataset.
    pub fn training_matrices(&self, dataset: &Dataset) -> Result<(Array2<f64>, Array2<f64>)> {
        check_prepared(dataset, self.link, self.rho)?;
        arranged_matrices(dataset, self.link, &self.config)
    }

    /// Adversarial training over a prepared dataset (standardized inputs,
    /// targets scaled by `rho`).
    pub fn train(&mut self, dataset: &Dataset, config: &TrainConfig) -> Result<()> {
        config.validate()?;
        let (x, y) = self.training_matrices(dataset)?;
        let mut state = TrainerState::new(self);
        let batch = config.batch_size.max(2);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for epoch in 0..config.epochs {
            let mut rng = stream_rng(config.seed, Stream::Shuffle, epoch as u64);
            order.shuffle(&mut rng);
            let mut sums = [0.0; 3];
            let mut steps = 0usize;
            for chunk in order.chunks(batch) {
                // Batch statistics are undefined for a single sample.
                if chunk.len() < 2 {
                    continue;
                }
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let s = train_step(self, &mut state, &xb, &yb, config)?;
                sums[0] += s.discriminator_loss;
                sums[1] += s.generator_loss;
                sums[2] += s.generator_mse;
                steps += 1;
            }
            let n = steps.max(1) as f64;
            self.history.push(EpochStats {
                discriminator_loss: sums[0] / n,
                generator_loss: sums[1] / n,
                generator_mse: sums[2] / n,
            });
        }
        Ok(())
    }

    /// Generator outputs (eval mode) for raw observations, in raw target layout
    /// and rescaled by `1/rho`.
    pub fn estimate_raw(&self, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let in_perm = input_permutation(self.link, &self.config);
        let out_perm = target_permutation(self.link, &self.config);
        let mut x = Array2::zeros((raw.len(), in_perm.len()));
        for (i, r) in raw.iter().enumerate() {
            if r.len() != in_perm.len() {
                return Err(Error::InvalidDimension(format!(
                    "observation has {} values, the {} link expects {}",
                    r.len(),
                    self.link.name(),
                    in_perm.len()
                )));
            }
            let (z, _) = standardize(r)?;
            for (j, v) in arrange(&z, &in_perm).into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        let out = self.generator.predict(&x)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|row| {
                unarrange(&row.to_vec(), &out_perm)
                    .into_iter()
                    .map(|v| v / self.rho)
                    .collect()
            })
            .collect())
    }

    /// Channel estimates for raw (unstandardized) observations.
    pub fn estimate_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<CMatrix>> {
        let (rows, cols) = self.link.channel_dim(&self.config);
        self.estimate_raw(raw)?
            .iter()
            .map(|o| unflatten_column_major(o, rows, cols))
            .collect()
    }

    pub fn estimate(&self, raw: &[f64]) -> Result<CMatrix> {
        Ok(self.estimate_batch(&[raw.to_vec()])?.remove(0))
    }
}

fn check_prepared(dataset: &Dataset, link: Link, rho: f64) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    if dataset.meta.link != link {
        return Err(Error::InvalidArgument(format!(
            "dataset is for the {} link, model is for the {} link",
            dataset.meta.link.name(),
            link.name()
        )));
    }
    if dataset.meta.target_scale != Some(rho) {
        return Err(Error::InvalidArgument(format!(
            "dataset must be standardized with targets scaled by {rho}"
        )));
    }
    Ok(())
}

/// Inputs and targets of a prepared dataset in network layout.
pub fn arranged_matrices(
    dataset: &Dataset,
    link: Link,
    config: &SystemConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let in_perm = input_permutation(link, config);
    let out_perm = target_permutation(link, config);
    let n = dataset.len();
    let mut x = Array2::zeros((n, in_perm.len()));
    let mut y = Array2::zeros((n, out_perm.len()));
    for (i, p) in dataset.pairs.iter().enumerate() {
        if p.r.len() != in_perm.len() || p.o.len() != out_perm.len() {
            return Err(Error::InvalidDimension(format!(
                "pair sizes ({}, {}) do not match the configuration ({}, {})",
                p.r.len(),
                p.o.len(),
                in_perm.len(),
                out_perm.len()
            )));
        }
        for (j, &k) in in_perm.iter().enumerate() {
            x[(i, j)] = p.r[k];
        }
        for (j, &k) in out_perm.iter().enumerate() {
            y[(i, j)] = p.o[k];
        }
    }
    Ok((x, y))
}
