//! DFT pilot and RIS phase designs, and synthesis of the received pilot
//! observations at the users and at the full-duplex BS.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{standard_complex_normal, CMatrix};
use crate::error::{Error, Result};

/// Orthogonal pilot block `X` (`M x P`), `X·Xᴴ = P_tx·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    pub x: CMatrix,
    pub tx_power: f64,
}

/// RIS phase configuration `Θ` (`N x C`); column `c` is the reflection vector
/// used during sub-frame `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    pub theta: CMatrix,
}

/// Stacked observation of one user: row `c` holds the `P` samples of sub-frame `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedUe {
    pub y: CMatrix,
    pub snr_db: Option<f64>,
    pub user: Option<usize>,
}

/// BS observation: one `M x P` matrix per sub-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBs {
    pub frames: Vec<CMatrix>,
    pub snr_db: Option<f64>,
}

impl ReceivedUe {
    pub fn labeled(mut self, snr_db: f64, user: usize) -> Self {
        self.snr_db = Some(snr_db);
        self.user = Some(user);
        self
    }
}

impl ReceivedBs {
    pub fn labeled(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    /// Sub-frame average `(1/C)·Σ_c Y_c`.
    pub fn average(&self) -> Result<CMatrix> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::InvalidDimension("BS observation has no sub-frames".into()))?;
        let mut sum = CMatrix::zeros(first.dim());
        for frame in &self.frames {
            if frame.dim() != first.dim() {
                return Err(Error::InvalidDimension("sub-frames differ in shape".into()));
            }
            sum += frame;
        }
        let scale = 1.0 / self.frames.len() as f64;
        Ok(sum.mapv(|z| z * scale))
    }
}

fn dft_entry(row: usize, col: usize, size: usize) -> Complex64 {
    let index = (row * col) % size;
    if index == 0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, 2.0 * PI * index as f64 / size as f64)
    }
}

pub fn build_pilot_matrix(m: usize, p: usize, tx_power_linear: f64) -> Result<PilotMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("pilot matrix needs M >= 1".into()));
    }
    if p != m {
        return Err(Error::UnsupportedConfiguration(format!(
            "pilot length P = {p} must equal M = {m}"
        )));
    }
    if !(tx_power_linear > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "transmit power must be positive, got {tx_power_linear}"
        )));
    }
    let amplitude = (tx_power_linear / m as f64).sqrt();
    let x = Array2::from_shape_fn((m, p), |(i, j)| dft_entry(i, j, m) * amplitude);
    Ok(PilotMatrix {
        x,
        tx_power: tx_power_linear,
    })
}

pub fn build_phase_matrix(n: usize, c: usize) -> Result<PhaseMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("phase matrix needs N >= 1".into()));
    }
    if c != n {
        return Err(Error::UnsupportedConfiguration(format!(
            "sub-frame count C = {c} must equal N = {n}"
        )));
    }
    let theta = Array2::from_shape_fn((n, c), |(i, j)| dft_entry(i, j, n));
    Ok(PhaseMatrix { theta })
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and nonnegative, got {sigma2}"
        )));
    }
    Ok(())
}

/// Adds circularly symmetric Gaussian noise of per-entry variance `sigma2`,
/// drawn in row-major order.
pub fn add_noise<R: Rng + ?Sized>(signal: &mut CMatrix, sigma2: f64, rng: &mut R) {
    if sigma2 == 0.0 {
        return;
    }
    let std = sigma2.sqrt();
    for i in 0..signal.nrows() {
        for j in 0..signal.ncols() {
            signal[(i, j)] += standard_complex_normal(rng) * std;
        }
    }
}

/// Conjugate transpose.
pub fn hermitian(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// Row `c` is `θ_cᴴ·G_kᴴ·X + n_c`.
pub fn synthesize_ue_rx<R: Rng + ?Sized>(
    g: &CMatrix,
    phases: &PhaseMatrix,
    pilots: &PilotMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<ReceivedUe> {
    check_sigma2(sigma2)?;
    let (m, n) = g.dim();
    if phases.theta.nrows() != n || pilots.x.nrows() != m {
        return Err(Error::InvalidDimension(format!(
            "G is {m}x{n}, Theta is {:?}, X is {:?}",
            phases.theta.dim(),
            pilots.x.dim()
        )));
    }
    let mut y = hermitian(&phases.theta).dot(&hermitian(g)).dot(&pilots.x);
    add_noise(&mut y, sigma2, rng);
    Ok(ReceivedUe {
        y,
        snr_db: None,
        user: None,
    })
}

/// Each sub-frame is `Aᴴ·X + Sᴴ·X + N_c`.
pub fn synthesize_bs_rx<R: Rng + ?Sized>(
    a: &CMatrix,
    si: &CMatrix,
    pilots: &PilotMatrix,
    sigma2: f64,
    rng: &mut R,
    subframes: usize,
) -> Result<ReceivedBs> {
    check_sigma2(sigma2)?;
    let m = pilots.x.nrows();
    if a.dim() != (m, m) || si.dim() != (m, m) {
        return Err(Error::InvalidDimension(format!(
            "A is {:?}, S is {:?}, X has {m} rows",
            a.dim(),
            si.dim()
        )));
    }
    let echo = hermitian(a).dot(&pilots.x);
    let leakage = hermitian(si).dot(&pilots.x);
    let clean = echo + leakage;
    let frames = (0..subframes)
        .map(|_| {
            let mut frame = clean.clone();
            add_noise(&mut frame, sigma2, rng);
            frame
        })
        .collect();
    Ok(ReceivedBs {
        frames,
        snr_db: None,
    })
}

/// Removes the known `Sᴴ·X` term from every sub-frame.
pub fn compensate_si(
    received: &ReceivedBs,
    si: &CMatrix,
    pilots: &PilotMatrix,
) -> Result<ReceivedBs> {
    let leakage = hermitian(si).dot(&pilots.x);
    let frames = received
        .frames
        .iter()
        .map(|frame| {
            if frame.dim() != leakage.dim() {
                return Err(Error::InvalidDimension(format!(
                    "sub-frame {:?} vs SI term {:?}",
                    frame.dim(),
                    leakage.dim()
                )));
            }
            Ok(frame - &leakage)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReceivedBs {
        frames,
        snr_db: received.snr_db,
    })
}

/// Mean per-entry power of a channel matrix.
pub fn channel_power(channel: &CMatrix) -> f64 {
    channel.iter().map(|z| z.norm_sqr()).sum::<f64>() / channel.len().max(1) as f64
}

/// Noise variance that puts the channel's mean per-entry power at `snr_db`
/// above the noise.
pub fn noise_variance_from_snr(channel: &CMatrix, snr_db: f64) -> Result<f64> {
    let power = channel_power(channel);
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::DegenerateInput(
            "channel has zero power; SNR is undefined".into(),
        ));
    }
    Ok(power / 10f64.powf(snr_db / 10.0))
}
