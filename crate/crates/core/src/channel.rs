//! Random channel realizations and array geometry.
//!
//! All channels are flat-fading complex matrices. The BS has `m` transmit
//! antennas, the RIS has `n` elements and there are `k` single-antenna users.
//! Powers follow a mW-linear convention: a dBm value `x` maps to `10^(x/10)`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub type CMatrix = Array2<Complex64>;
pub type CVector = Array1<Complex64>;

/// Physical and protocol constants of one simulated deployment.
///
/// The pilot protocol always uses `P = M` time slots per sub-frame and
/// `C = N` sub-frames, so those two counts are derived rather than stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub spacing_ratio: f64,
    /// Rician factor of the BS-RIS link.
    pub rician_bs_ris: f64,
    /// Rician factor of the RIS-UE links.
    pub rician_ris_ue: f64,
    pub pl_ref_dbm: f64,
    pub d_ref_m: f64,
    /// BS-target-BS distance, treated as the full two-way link.
    pub d1_m: f64,
    pub d2_m: f64,
    pub d3_m: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub tx_power_dbm: f64,
    pub theta_target_rad: f64,
    pub theta_aod_rad: f64,
    pub theta_aoa_rad: f64,
    pub rho: f64,
    pub si_gain: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 4,
            n: 30,
            k: 3,
            spacing_ratio: 0.5,
            rician_bs_ris: 10.0,
            rician_ris_ue: 0.0,
            pl_ref_dbm: -30.0,
            d_ref_m: 1.0,
            d1_m: 140.0,
            d2_m: 50.0,
            d3_m: 2.0,
            zeta1: 3.0,
            zeta2: 2.3,
            zeta3: 2.0,
            tx_power_dbm: -20.0,
            theta_target_rad: -2.0 * PI / 3.0,
            theta_aod_rad: PI / 3.0,
            theta_aoa_rad: PI / 3.0,
            rho: 1e4,
            si_gain: 1.0,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn new(m: usize, n: usize, k: usize) -> Result<Self> {
        let config = Self {
            m,
            n,
            k,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    /// Pilot time slots per sub-frame.
    pub fn p(&self) -> usize {
        self.m
    }

    /// Number of pilot sub-frames.
    pub fn c(&self) -> usize {
        self.n
    }

    pub fn tx_power_linear(&self) -> f64 {
        dbm_to_linear(self.tx_power_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in [("M", self.m), ("N", self.n), ("K", self.k)] {
            if value == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        let positive = [
            ("spacing_ratio", self.spacing_ratio),
            ("d_ref_m", self.d_ref_m),
            ("d1_m", self.d1_m),
            ("d2_m", self.d2_m),
            ("d3_m", self.d3_m),
            ("rho", self.rho),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {value}")));
            }
        }
        let nonnegative = [
            ("rician_bs_ris", self.rician_bs_ris),
            ("rician_ris_ue", self.rician_ris_ue),
            ("si_gain", self.si_gain),
        ];
        for (key, value) in nonnegative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("must be nonnegative, got {value}"),
                ));
            }
        }
        let finite = [
            ("pl_ref_dbm", self.pl_ref_dbm),
            ("zeta1", self.zeta1),
            ("zeta2", self.zeta2),
            ("zeta3", self.zeta3),
            ("tx_power_dbm", self.tx_power_dbm),
            ("theta_target_rad", self.theta_target_rad),
            ("theta_aod_rad", self.theta_aod_rad),
            ("theta_aoa_rad", self.theta_aoa_rad),
        ];
        for (key, value) in finite {
            if !value.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        Ok(())
    }
}

pub fn dbm_to_linear(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Uniform linear array response.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: CVector,
}

pub fn steering_vector(theta: f64, m: usize, spacing_ratio: f64) -> Result<SteeringVector> {
    if m == 0 {
        return Err(Error::InvalidDimension(
            "steering vector needs at least one antenna".into(),
        ));
    }
    let step = 2.0 * PI * spacing_ratio * theta.sin();
    let entries = (0..m)
        .map(|i| {
            if i == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, step * i as f64)
            }
        })
        .collect();
    Ok(SteeringVector { entries })
}

/// `PL_r · (d/d_r)^(-zeta)` as a linear gain.
pub fn path_loss_linear(d_m: f64, zeta: f64, pl_ref_dbm: f64, d_ref_m: f64) -> Result<f64> {
    if !(d_m > 0.0) || !(d_ref_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distances must be positive (d = {d_m}, d_ref = {d_ref_m})"
        )));
    }
    Ok(dbm_to_linear(pl_ref_dbm) * (d_m / d_ref_m).powf(-zeta))
}

/// `a · bᴴ`.
pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

/// Circularly symmetric complex normal sample with unit variance.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let mut out = CMatrix::zeros((rows, cols));
    // Row-major fill keeps the draw order independent of ndarray internals.
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = standard_complex_normal(rng);
        }
    }
    out
}

/// Rank-one radar echo channel `A = mu · a · aᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingChannel {
    pub matrix: CMatrix,
    pub mu: Complex64,
    pub steering: SteeringVector,
}

pub fn draw_sensing_channel<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<SensingChannel> {
    config.validate()?;
    let amplitude =
        path_loss_linear(config.d1_m, config.zeta1, config.pl_ref_dbm, config.d_ref_m)?.sqrt();
    let phase = rng.random_range(0.0..2.0 * PI);
    let mu = Complex64::from_polar(amplitude, phase);
    let steering = steering_vector(config.theta_target_rad, config.m, config.spacing_ratio)?;
    let matrix = outer(&steering.entries, &steering.entries).mapv(|z| z * mu);
    Ok(SensingChannel {
        matrix,
        mu,
        steering,
    })
}

/// Mixes a line-of-sight matrix and a scattered matrix with weights
/// `K1/(K1+1)` and `1/(K1+1)`, then applies the path-loss amplitude.
pub fn rician_combine(
    los: &CMatrix,
    scattered: &CMatrix,
    k1: f64,
    pl_linear: f64,
) -> Result<CMatrix> {
    if !(k1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Rician factor must be nonnegative, got {k1}"
        )));
    }
    if los.dim() != scattered.dim() {
        return Err(Error::InvalidDimension(format!(
            "LoS {:?} vs scattered {:?}",
            los.dim(),
            scattered.dim()
        )));
    }
    let los_weight = k1 / (k1 + 1.0);
    let nlos_weight = 1.0 / (k1 + 1.0);
    let amplitude = pl_linear.sqrt();
    let mut out = CMatrix::zeros(los.dim());
    ndarray::Zip::from(&mut out)
        .and(los)
        .and(scattered)
        .for_each(|o, &l, &s| *o = (l * los_weight + s * nlos_weight) * amplitude);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn draw_rician_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k1: f64,
    pl_linear: f64,
    theta_dep: f64,
    theta_arr: f64,
    spacing_ratio: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if !(k1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Rician factor must be nonnegative, got {k1}"
        )));
    }
    let dep = steering_vector(theta_dep, rows, spacing_ratio)?;
    let arr = steering_vector(theta_arr, cols, spacing_ratio)?;
    let los = outer(&dep.entries, &arr.entries);
    let scattered = complex_normal_matrix(rows, cols, rng);
    rician_combine(&los, &scattered, k1, pl_linear)
}

/// `G_k = H · diag(r_k)`.
pub fn cascade(h: &CMatrix, r: &CVector) -> Result<CMatrix> {
    if h.ncols() != r.len() {
        return Err(Error::InvalidDimension(format!(
            "H has {} columns but r_k has {} entries",
            h.ncols(),
            r.len()
        )));
    }
    let mut g = h.clone();
    for (mut column, &coeff) in g.columns_mut().into_iter().zip(r.iter()) {
        column.mapv_inplace(|z| z * coeff);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommChannels {
    /// BS-RIS channel, `M x N`.
    pub h: CMatrix,
    /// RIS-UE channels, one length-`N` vector per user.
    pub r: Vec<CVector>,
    /// Cascaded channels `H · diag(r_k)`, one `M x N` matrix per user.
    pub g: Vec<CMatrix>,
}

pub fn draw_comm_channels<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<CommChannels> {
    config.validate()?;
    let pl_bs_ris = path_loss_linear(config.d2_m, config.zeta2, config.pl_ref_dbm, config.d_ref_m)?;
    let pl_ris_ue = path_loss_linear(config.d3_m, config.zeta3, config.pl_ref_dbm, config.d_ref_m)?;
    let h = draw_rician_matrix(
        config.m,
        config.n,
        config.rician_bs_ris,
        pl_bs_ris,
        config.theta_aod_rad,
        config.theta_aoa_rad,
        config.spacing_ratio,
        rng,
    )?;
    let mut r = Vec::with_capacity(config.k);
    let mut g = Vec::with_capacity(config.k);
    for _ in 0..config.k {
        let column = draw_rician_matrix(
            config.n,
            1,
            config.rician_ris_ue,
            pl_ris_ue,
            config.theta_aod_rad,
            config.theta_aoa_rad,
            config.spacing_ratio,
            rng,
        )?;
        let rk = column.column(0).to_owned();
        g.push(cascade(&h, &rk)?);
        r.push(rk);
    }
    Ok(CommChannels { h, r, g })
}

/// Full-duplex leakage channel, known at the BS.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfInterferenceChannel {
    pub matrix: CMatrix,
}

pub fn draw_si_channel<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<SelfInterferenceChannel> {
    config.validate()?;
    let matrix = complex_normal_matrix(config.m, config.m, rng).mapv(|z| z * config.si_gain);
    Ok(SelfInterferenceChannel { matrix })
}

/// The SI channel tied to `config.seed`.
pub fn si_channel_for(config: &SystemConfig) -> Result<SelfInterferenceChannel> {
    let mut rng = stream_rng(config.seed, Stream::SelfInterference, 0);
    draw_si_channel(config, &mut rng)
}
