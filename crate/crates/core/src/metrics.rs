//! NMSE evaluation of channel estimators.

use rayon::prelude::*;

use crate::channel::{CMatrix, SystemConfig};
use crate::dataset::{generate_test_pairs, unflatten_column_major, Link, SamplePair};
use crate::error::{Error, Result};

/// Anything that maps raw observations of one link to channel estimates.
pub trait Estimator: Sync {
    fn link(&self) -> Link;

    fn estimate_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<CMatrix>>;
}

impl Estimator for crate::cgan::CganModel {
    fn link(&self) -> Link {
        self.link
    }

    fn estimate_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<CMatrix>> {
        crate::cgan::CganModel::estimate_batch(self, raw)
    }
}

/// `‖est − truth‖²_F / ‖truth‖²_F`.
pub fn nmse(estimated: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimated.dim() != truth.dim() {
        return Err(Error::InvalidDimension(format!(
            "estimate is {:?}, truth is {:?}",
            estimated.dim(),
            truth.dim()
        )));
    }
    let power: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if !(power > 0.0) {
        return Err(Error::DegenerateInput("true channel is zero".into()));
    }
    let err: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(err / power)
}

/// Mean NMSE of `estimator` over labelled pairs; truth is read from the
/// targets only for scoring.
pub fn nmse_on_pairs<E: Estimator + ?Sized>(
    estimator: &E,
    config: &SystemConfig,
    pairs: &[SamplePair],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to evaluate".into()));
    }
    let (rows, cols) = estimator.link().channel_dim(config);
    let raw: Vec<Vec<f64>> = pairs.iter().map(|p| p.r.clone()).collect();
    let estimates = estimator.estimate_batch(&raw)?;
    let scores = estimates
        .par_iter()
        .zip(pairs)
        .map(|(est, p)| nmse(est, &unflatten_column_major(&p.o, rows, cols)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// One Monte-Carlo test condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub link: Link,
    pub user: usize,
    pub snr_db: f64,
}

/// Monte-Carlo NMSE over `trials` fresh channel and noise draws. The draws
/// depend only on `(seed, stream_index)`, so different estimators see the
/// same realizations.
pub fn nmse_mc<E: Estimator + ?Sized>(
    estimator: &E,
    scenario: &Scenario,
    trials: usize,
    seed: u64,
    stream_index: usize,
) -> Result<f64> {
    if estimator.link() != scenario.link {
        return Err(Error::InvalidArgument(
            "estimator and scenario links differ".into(),
        ));
    }
    let pairs = generate_test_pairs(
        &scenario.config,
        scenario.link,
        scenario.user,
        scenario.snr_db,
        trials,
        seed,
        stream_index,
    )?;
    nmse_on_pairs(estimator, &scenario.config, &pairs)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
