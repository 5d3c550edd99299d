//! Real-valued input/target pairs for the estimators, their generation with
//! noisy duplicates across SNR levels, normalization, splitting and storage.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    draw_comm_channels, draw_sensing_channel, si_channel_for, CMatrix, SystemConfig,
};
use crate::container;
use crate::error::{Error, Result};
use crate::pilot::{
    build_phase_matrix, build_pilot_matrix, compensate_si, noise_variance_from_snr,
    synthesize_bs_rx, synthesize_ue_rx, ReceivedBs, ReceivedUe,
};
use crate::rng::{cell_index, stream_rng, Stream};

/// Which channel a dataset or model is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Radar echo channel `A` at the BS.
    Sensing,
    /// Cascaded channel `G_k` of one user.
    Communication,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Sensing => "sensing",
            Link::Communication => "comm",
        }
    }

    /// Raw input length (`2MP` or `2CP`).
    pub fn input_len(self, config: &SystemConfig) -> usize {
        match self {
            Link::Sensing => 2 * config.m * config.p(),
            Link::Communication => 2 * config.c() * config.p(),
        }
    }

    /// Target length (`2M²` or `2MN`).
    pub fn target_len(self, config: &SystemConfig) -> usize {
        let (rows, cols) = self.channel_dim(config);
        2 * rows * cols
    }

    pub fn channel_dim(self, config: &SystemConfig) -> (usize, usize) {
        match self {
            Link::Sensing => (config.m, config.m),
            Link::Communication => (config.m, config.n),
        }
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensing" | "se" => Ok(Link::Sensing),
            "comm" | "communication" | "ce" => Ok(Link::Communication),
            other => Err(Error::InvalidArgument(format!(
                "unknown link `{other}` (expected sensing or comm)"
            ))),
        }
    }
}

/// Per-sample standardization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    #[serde(skip)]
    pub r: Vec<f64>,
    #[serde(skip)]
    pub o: Vec<f64>,
    pub snr_db: f64,
    pub q: usize,
    /// 1 is the noiseless original, 2.. are noisy duplicates.
    pub v: usize,
    pub link: Link,
    pub user: Option<usize>,
    /// Present once `r` has been standardized.
    pub norm: Option<NormalizationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: SystemConfig,
    pub link: Link,
    pub user: Option<usize>,
    pub q: usize,
    pub v: usize,
    pub snr_grid_db: Vec<f64>,
    pub seed: u64,
    /// Set on the two halves produced by [`split`].
    pub test_fraction: Option<f64>,
    /// `Some(rho)` once inputs are standardized and targets scaled.
    pub target_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub pairs: Vec<SamplePair>,
}

/// Interleaves real and imaginary parts as `[Re..., Im...]` of column-major `vec(m)`.
fn vec_re_im(m: &CMatrix) -> Vec<f64> {
    let entries: Vec<Complex64> = m.t().iter().copied().collect();
    entries
        .iter()
        .map(|z| z.re)
        .chain(entries.iter().map(|z| z.im))
        .collect()
}

/// Inverse of the column-major `[Re, Im]` flattening used for targets and
/// sensing inputs.
pub fn unflatten_column_major(values: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    let len = rows * cols;
    if values.len() != 2 * len {
        return Err(Error::InvalidDimension(format!(
            "expected {} values for a {rows}x{cols} complex matrix, got {}",
            2 * len,
            values.len()
        )));
    }
    Ok(CMatrix::from_shape_fn((rows, cols), |(i, j)| {
        let idx = j * rows + i;
        Complex64::new(values[idx], values[len + idx])
    }))
}

/// Inverse of the row-major (sub-frame-major) `[Re, Im]` flattening used for
/// communication inputs.
pub fn unflatten_row_major(values: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    let len = rows * cols;
    if values.len() != 2 * len {
        return Err(Error::InvalidDimension(format!(
            "expected {} values for a {rows}x{cols} complex matrix, got {}",
            2 * len,
            values.len()
        )));
    }
    Ok(CMatrix::from_shape_fn((rows, cols), |(i, j)| {
        let idx = i * cols + j;
        Complex64::new(values[idx], values[len + idx])
    }))
}

/// Pairs an SI-compensated BS observation with the echo channel it came from.
pub fn build_sensing_pair(a: &CMatrix, received: &ReceivedBs) -> Result<SamplePair> {
    let y = received.average()?;
    let m = a.nrows();
    if a.ncols() != m || y.nrows() != m {
        return Err(Error::InvalidDimension(format!(
            "A is {:?}, averaged observation is {:?}",
            a.dim(),
            y.dim()
        )));
    }
    Ok(SamplePair {
        r: vec_re_im(&y),
        o: vec_re_im(a),
        snr_db: received.snr_db.unwrap_or(f64::INFINITY),
        q: 0,
        v: 1,
        link: Link::Sensing,
        user: None,
        norm: None,
    })
}

/// Pairs a user's stacked observation with its cascaded channel.
pub fn build_comm_pair(g: &CMatrix, received: &ReceivedUe) -> Result<SamplePair> {
    if g.nrows() != received.y.ncols() {
        return Err(Error::InvalidDimension(format!(
            "G is {:?} but the observation has {} pilot slots",
            g.dim(),
            received.y.ncols()
        )));
    }
    let stacked: Vec<Complex64> = received.y.iter().copied().collect();
    let r = stacked
        .iter()
        .map(|z| z.re)
        .chain(stacked.iter().map(|z| z.im))
        .collect();
    Ok(SamplePair {
        r,
        o: vec_re_im(g),
        snr_db: received.snr_db.unwrap_or(f64::INFINITY),
        q: 0,
        v: 1,
        link: Link::Communication,
        user: received.user,
        norm: None,
    })
}

/// Parameters of one generation run beyond the physical configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPlan {
    pub snr_grid_db: Vec<f64>,
    pub q: usize,
    pub v: usize,
    pub link: Link,
    /// User whose cascaded channel is the target (communication only).
    pub user: usize,
    pub seed: u64,
}

/// Observations of one channel realization: the noiseless original when
/// `noiseless_first` and then noisy copies at `snr_db`, `count` pairs total.
#[allow(clippy::too_many_arguments)]
fn realization_pairs<R: Rng + ?Sized>(
    config: &SystemConfig,
    link: Link,
    user: usize,
    snr_db: f64,
    count: usize,
    noiseless_first: bool,
    si: &CMatrix,
    rng: &mut R,
) -> Result<Vec<SamplePair>> {
    let pilots = build_pilot_matrix(config.m, config.p(), config.tx_power_linear())?;
    let mut out = Vec::with_capacity(count);
    match link {
        Link::Sensing => {
            let a = draw_sensing_channel(config, rng)?.matrix;
            let sigma2 = noise_variance_from_snr(&a, snr_db)?;
            for v in 1..=count {
                let s2 = if noiseless_first && v == 1 {
                    0.0
                } else {
                    sigma2
                };
                let rx = synthesize_bs_rx(&a, si, &pilots, s2, rng, config.c())?;
                let rx = compensate_si(&rx, si, &pilots)?.labeled(snr_db);
                let mut pair = build_sensing_pair(&a, &rx)?;
                pair.v = v;
                out.push(pair);
            }
        }
        Link::Communication => {
            let phases = build_phase_matrix(config.n, config.c())?;
            let channels = draw_comm_channels(config, rng)?;
            let g = &channels.g[user];
            let sigma2 = noise_variance_from_snr(g, snr_db)?;
            for v in 1..=count {
                let s2 = if noiseless_first && v == 1 {
                    0.0
                } else {
                    sigma2
                };
                let rx = synthesize_ue_rx(g, &phases, &pilots, s2, rng)?.labeled(snr_db, user);
                let mut pair = build_comm_pair(g, &rx)?;
                pair.v = v;
                out.push(pair);
            }
        }
    }
    Ok(out)
}

fn check_plan(config: &SystemConfig, plan: &GenerationPlan) -> Result<()> {
    config.validate()?;
    if plan.snr_grid_db.is_empty() {
        return Err(Error::InvalidArgument("SNR grid is empty".into()));
    }
    if plan.snr_grid_db.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "SNR grid contains a non-finite value".into(),
        ));
    }
    if plan.q == 0 || plan.v == 0 {
        return Err(Error::InvalidArgument(format!(
            "Q and V must be at least 1 (got Q = {}, V = {})",
            plan.q, plan.v
        )));
    }
    if plan.link == Link::Communication && plan.user >= config.k {
        return Err(Error::InvalidArgument(format!(
            "user {} does not exist (K = {})",
            plan.user, config.k
        )));
    }
    Ok(())
}

/// Draws `Q` channel realizations per SNR level and emits, for each, the
/// noiseless pair (`v = 1`) plus `V - 1` noisy duplicates. Pairs are ordered
/// by (SNR, q, v) and depend only on `config` and `plan`.
pub fn generate_dataset(config: &SystemConfig, plan: &GenerationPlan) -> Result<Dataset> {
    check_plan(config, plan)?;
    let si = si_channel_for(config)?.matrix;
    let cells: Vec<(usize, usize)> = (0..plan.snr_grid_db.len())
        .flat_map(|s| (0..plan.q).map(move |q| (s, q)))
        .collect();
    let chunks = cells
        .par_iter()
        .map(|&(s, q)| {
            let mut rng = stream_rng(plan.seed, Stream::Dataset, cell_index(s, q));
            let snr = plan.snr_grid_db[s];
            let mut pairs = realization_pairs(
                config, plan.link, plan.user, snr, plan.v, true, &si, &mut rng,
            )?;
            for p in &mut pairs {
                p.q = q;
            }
            Ok(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta: DatasetMeta {
            config: config.clone(),
            link: plan.link,
            user: (plan.link == Link::Communication).then_some(plan.user),
            q: plan.q,
            v: plan.v,
            snr_grid_db: plan.snr_grid_db.clone(),
            seed: plan.seed,
            test_fraction: None,
            target_scale: None,
        },
        pairs: chunks.into_iter().flatten().collect(),
    })
}

/// Fresh noisy observations at one SNR, one per channel realization, for
/// testing. `stream_index` separates independent test sets under one seed.
pub fn generate_test_pairs(
    config: &SystemConfig,
    link: Link,
    user: usize,
    snr_db: f64,
    trials: usize,
    seed: u64,
    stream_index: usize,
) -> Result<Vec<SamplePair>> {
    let plan = GenerationPlan {
        snr_grid_db: vec![snr_db],
        q: trials,
        v: 1,
        link,
        user,
        seed,
    };
    check_plan(config, &plan)?;
    let si = si_channel_for(config)?.matrix;
    let chunks = (0..trials)
        .into_par_iter()
        .map(|q| {
            let mut rng = stream_rng(seed, Stream::Evaluate, cell_index(stream_index, q));
            let mut pairs = realization_pairs(config, link, user, snr_db, 1, false, &si, &mut rng)?;
            pairs[0].q = q;
            Ok(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Zero-mean, unit population-std copy of `r`.
pub fn standardize(r: &[f64]) -> Result<(Vec<f64>, NormalizationRecord)> {
    if r.is_empty() {
        return Err(Error::DegenerateInput(
            "cannot standardize an empty sample".into(),
        ));
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12) {
        return Err(Error::DegenerateInput(format!(
            "sample is (nearly) constant: std = {std:e}"
        )));
    }
    Ok((
        r.iter().map(|x| (x - mean) / std).collect(),
        NormalizationRecord { mean, std },
    ))
}

pub fn scale_target(o: &[f64], rho: f64) -> Vec<f64> {
    o.iter().map(|x| x * rho).collect()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Standardizes every input and multiplies every target by `rho`.
    pub fn prepared(&self, rho: f64) -> Result<Dataset> {
        if self.meta.target_scale.is_some() {
            return Err(Error::InvalidArgument("dataset is already prepared".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                let (r, norm) = standardize(&p.r)?;
                Ok(SamplePair {
                    r,
                    o: scale_target(&p.o, rho),
                    norm: Some(norm),
                    ..p.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut meta = self.meta.clone();
        meta.target_scale = Some(rho);
        Ok(Dataset { meta, pairs })
    }

    /// Inputs and targets as `(batch, features)` matrices, selecting `indices`.
    pub fn matrices(&self, indices: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let r_len = self.pairs.first().map_or(0, |p| p.r.len());
        let o_len = self.pairs.first().map_or(0, |p| p.o.len());
        let mut x = Array2::zeros((indices.len(), r_len));
        let mut y = Array2::zeros((indices.len(), o_len));
        for (row, &i) in indices.iter().enumerate() {
            let p = &self.pairs[i];
            x.row_mut(row).assign(&ndarray::ArrayView1::from(&p.r[..]));
            y.row_mut(row).assign(&ndarray::ArrayView1::from(&p.o[..]));
        }
        (x, y)
    }

    /// All inputs and targets as matrices.
    pub fn all_matrices(&self) -> (Array2<f64>, Array2<f64>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.matrices(&all)
    }
}

/// Shuffled disjoint split; the test half gets `round(len · test_fraction)` pairs.
pub fn split<R: Rng + ?Sized>(
    dataset: &Dataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let n_test = (dataset.len() as f64 * test_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut meta = dataset.meta.clone();
    meta.test_fraction = Some(test_fraction);
    let take = |idx: &[usize]| Dataset {
        meta: meta.clone(),
        pairs: idx.iter().map(|&i| dataset.pairs[i].clone()).collect(),
    };
    Ok((take(train_idx), take(test_idx)))
}

#[derive(Serialize, Deserialize)]
struct DatasetBody {
    meta: DatasetMeta,
    input_len: usize,
    target_len: usize,
    pairs: Vec<SamplePair>,
}

const DATASET_KIND: &str = "risgan-dataset";

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let input_len = dataset.pairs.first().map_or(0, |p| p.r.len());
    let target_len = dataset.pairs.first().map_or(0, |p| p.o.len());
    let mut payload = Vec::with_capacity(dataset.len() * (input_len + target_len));
    for p in &dataset.pairs {
        if p.r.len() != input_len || p.o.len() != target_len {
            return Err(Error::InvalidDimension("pairs differ in length".into()));
        }
        payload.extend_from_slice(&p.r);
        payload.extend_from_slice(&p.o);
    }
    let body = DatasetBody {
        meta: dataset.meta.clone(),
        input_len,
        target_len,
        pairs: dataset.pairs.clone(),
    };
    container::write(path, DATASET_KIND, &body, &payload)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (body, payload): (DatasetBody, _) = container::read(path, DATASET_KIND)?;
    let stride = body.input_len + body.target_len;
    if payload.len() != stride * body.pairs.len() {
        return Err(Error::Format(format!(
            "{}: payload does not hold {} pairs",
            path.display(),
            body.pairs.len()
        )));
    }
    let mut pairs = body.pairs;
    for (p, chunk) in pairs.iter_mut().zip(payload.chunks_exact(stride.max(1))) {
        p.r = chunk[..body.input_len].to_vec();
        p.o = chunk[body.input_len..].to_vec();
    }
    Ok(Dataset {
        meta: body.meta,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::{build_pilot_matrix, hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> SystemConfig {
        SystemConfig::new(2, 4, 2).unwrap()
    }

    #[test]
    fn standardize_known_values() {
        let (z, norm) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expected).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12);
        assert!((z[2] - expected).abs() < 1e-12);
        assert_eq!(norm.mean, 2.0);
        let (again, _) = standardize(&z).unwrap();
        for (a, b) in again.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            standardize(&[4.0; 5]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn target_scaling() {
        assert_eq!(scale_target(&[2e-4], 1e4), vec![2.0]);
        assert_eq!(scale_target(&[0.3, -1.0], 1.0), vec![0.3, -1.0]);
        let back = scale_target(&scale_target(&[1.234e-5], 1e4), 1e-4);
        assert!((back[0] - 1.234e-5).abs() < 1e-12);
    }

    #[test]
    fn sensing_pair_noiseless_reconstructs_echo() {
        let config = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = draw_sensing_channel(&config, &mut rng).unwrap().matrix;
        let x = build_pilot_matrix(4, 4, config.tx_power_linear()).unwrap();
        let si = CMatrix::zeros((4, 4));
        let rx = synthesize_bs_rx(&a, &si, &x, 0.0, &mut rng, 7).unwrap();
        let pair = build_sensing_pair(&a, &rx).unwrap();
        assert_eq!(pair.r.len(), 32);
        assert_eq!(pair.o.len(), 32);
        let y = unflatten_column_major(&pair.r, 4, 4).unwrap();
        let expected = hermitian(&a).dot(&x.x);
        for (u, v) in y.iter().zip(expected.iter()) {
            assert!((u - v).norm() < 1e-18);
        }
        assert_eq!(unflatten_column_major(&pair.o, 4, 4).unwrap(), a);
    }

    #[test]
    fn real_channel_has_zero_imaginary_target() {
        let a = CMatrix::from_shape_fn((2, 2), |(i, j)| Complex64::new((i + 2 * j) as f64, 0.0));
        let rx = ReceivedBs {
            frames: vec![CMatrix::zeros((2, 2))],
            snr_db: None,
        };
        let pair = build_sensing_pair(&a, &rx).unwrap();
        assert!(pair.o[4..].iter().all(|&v| v == 0.0));
        // column-major: A[1,0] precedes A[0,1]
        assert_eq!(&pair.o[..4], &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn comm_pair_layout() {
        let g = CMatrix::zeros((1, 1));
        let rx = ReceivedUe {
            y: CMatrix::from_elem((1, 1), Complex64::new(0.5, -2.0)),
            snr_db: None,
            user: Some(0),
        };
        assert_eq!(build_comm_pair(&g, &rx).unwrap().r, vec![0.5, -2.0]);

        let y = CMatrix::from_shape_fn((3, 2), |(c, p)| Complex64::new(c as f64, p as f64 + 0.5));
        let rx = ReceivedUe {
            y: y.clone(),
            snr_db: None,
            user: None,
        };
        let pair = build_comm_pair(&CMatrix::zeros((2, 5)), &rx).unwrap();
        assert_eq!(unflatten_row_major(&pair.r, 3, 2).unwrap(), y);
        assert_eq!(&pair.r[..6], &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);

        let zero = ReceivedUe {
            y: CMatrix::zeros((3, 2)),
            snr_db: None,
            user: None,
        };
        assert!(build_comm_pair(&CMatrix::zeros((2, 5)), &zero)
            .unwrap()
            .r
            .iter()
            .all(|&v| v == 0.0));
        assert!(build_comm_pair(&CMatrix::zeros((3, 5)), &zero).is_err());
    }

    #[test]
    fn sizes_and_determinism() {
        let config = small_config();
        let plan = GenerationPlan {
            snr_grid_db: vec![10.0, 15.0, 20.0],
            q: 4,
            v: 3,
            link: Link::Communication,
            user: 1,
            seed: 9,
        };
        let ds = generate_dataset(&config, &plan).unwrap();
        assert_eq!(ds.len(), 36);
        for p in &ds.pairs {
            assert_eq!(p.r.len(), 2 * 4 * 2);
            assert_eq!(p.o.len(), 2 * 2 * 4);
            assert!(p.r.iter().chain(&p.o).all(|v| v.is_finite()));
        }
        assert_eq!(ds, generate_dataset(&config, &plan).unwrap());
        let keys: Vec<_> = ds
            .pairs
            .iter()
            .map(|p| (p.snr_db as i64, p.q, p.v))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);

        let single = GenerationPlan {
            v: 1,
            link: Link::Sensing,
            ..plan.clone()
        };
        assert_eq!(generate_dataset(&config, &single).unwrap().len(), 12);

        let empty = GenerationPlan {
            snr_grid_db: vec![],
            ..plan
        };
        assert!(matches!(
            generate_dataset(&config, &empty),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_sizes() {
        let config = small_config();
        let plan = GenerationPlan {
            snr_grid_db: vec![10.0],
            q: 2,
            v: 1,
            link: Link::Sensing,
            user: 0,
            seed: 1,
        };
        let ds = generate_dataset(&config, &plan).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, test) = split(&ds, 0.5, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        assert!(split(&ds, 1.0, &mut rng).is_err());
        assert!(split(&ds, 0.0, &mut rng).is_err());
    }
}
