//! Line-oriented `key = value` run configuration.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{ElmConfig, FfnConfig};
use crate::cgan::TrainConfig;
use crate::channel::SystemConfig;
use crate::dataset::Link;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small corpora that train in minutes.
    Desk,
    /// Corpus sizes of the reference experiments.
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::config(
                "profile",
                format!("unknown profile `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVariable {
    M,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub profile: Profile,
    pub link: Link,
    pub user: usize,
    pub q: usize,
    pub v: usize,
    pub train_snr_db: Vec<f64>,
    pub test_snr_db: Vec<f64>,
    pub sweep_snr_db: Vec<f64>,
    pub test_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub ffn_lr: f64,
    pub elm_lambda: f64,
    /// Monte-Carlo draws per test SNR point.
    pub trials: usize,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<usize>,
    pub complexity_m: Vec<usize>,
    pub complexity_n: Vec<usize>,
    pub experiment: String,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (q, v, epochs) = match profile {
            Profile::Desk => (200, 5, 50),
            Profile::Full => (1000, 10, 100),
        };
        Self {
            system: SystemConfig::default(),
            profile,
            link: Link::Sensing,
            user: 0,
            q,
            v,
            train_snr_db: vec![10.0, 15.0, 20.0],
            test_snr_db: (0..17).map(|i| -10.0 + 2.5 * i as f64).collect(),
            sweep_snr_db: vec![-5.0, 10.0],
            test_fraction: 0.1,
            epochs,
            batch_size: 16,
            alpha: 100.0,
            lr_generator: 2e-4,
            lr_discriminator: 2e-5,
            ffn_lr: 2e-4,
            elm_lambda: 1e-6,
            trials: 500,
            sweep_variable: SweepVariable::M,
            sweep_values: vec![4, 8, 16],
            complexity_m: vec![2, 4, 8, 16, 32],
            complexity_n: vec![10, 20, 30, 40, 50, 60],
            experiment: "run".to_string(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.system.seed
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            alpha: self.alpha,
            lr_generator: self.lr_generator,
            lr_discriminator: self.lr_discriminator,
            epochs: self.epochs,
            seed: self.seed(),
        }
    }

    pub fn ffn_config(&self) -> FfnConfig {
        FfnConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.ffn_lr,
            seed: self.seed(),
        }
    }

    pub fn elm_config(&self) -> ElmConfig {
        ElmConfig {
            lambda: self.elm_lambda,
            seed: self.seed(),
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let s = &mut self.system;
        match key {
            "M" | "m" => s.m = parse(key, value)?,
            "N" | "n" => s.n = parse(key, value)?,
            "K" | "k" => s.k = parse(key, value)?,
            "spacing_ratio" => s.spacing_ratio = parse(key, value)?,
            "rician_bs_ris" => s.rician_bs_ris = parse(key, value)?,
            "rician_ris_ue" => s.rician_ris_ue = parse(key, value)?,
            "pl_ref_dbm" => s.pl_ref_dbm = parse(key, value)?,
            "d_ref_m" => s.d_ref_m = parse(key, value)?,
            "d1_m" => s.d1_m = parse(key, value)?,
            "d2_m" => s.d2_m = parse(key, value)?,
            "d3_m" => s.d3_m = parse(key, value)?,
            "zeta1" => s.zeta1 = parse(key, value)?,
            "zeta2" => s.zeta2 = parse(key, value)?,
            "zeta3" => s.zeta3 = parse(key, value)?,
            "tx_power_dbm" => s.tx_power_dbm = parse(key, value)?,
            "theta_target_rad" => s.theta_target_rad = parse(key, value)?,
            "theta_aod_rad" => s.theta_aod_rad = parse(key, value)?,
            "theta_aoa_rad" => s.theta_aoa_rad = parse(key, value)?,
            "rho" => s.rho = parse(key, value)?,
            "si_gain" => s.si_gain = parse(key, value)?,
            "seed" => s.seed = parse(key, value)?,
            "profile" => {
                let profile: Profile = value.parse()?;
                let fresh = RunConfig::for_profile(profile);
                self.profile = profile;
                self.q = fresh.q;
                self.v = fresh.v;
                self.epochs = fresh.epochs;
            }
            "link" => {
                self.link = value
                    .parse()
                    .map_err(|e: Error| Error::config(key, e.to_string()))?
            }
            "user" => self.user = parse(key, value)?,
            "Q" | "q" => self.q = parse(key, value)?,
            "V" | "v" => self.v = parse(key, value)?,
            "train_snr_db" => self.train_snr_db = parse_grid(key, value)?,
            "test_snr_db" => self.test_snr_db = parse_grid(key, value)?,
            "sweep_snr_db" => self.sweep_snr_db = parse_grid(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "lr_generator" => self.lr_generator = parse(key, value)?,
            "lr_discriminator" => self.lr_discriminator = parse(key, value)?,
            "ffn_lr" => self.ffn_lr = parse(key, value)?,
            "elm_lambda" => self.elm_lambda = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "sweep_variable" => {
                self.sweep_variable = match value {
                    "M" | "m" => SweepVariable::M,
                    "N" | "n" => SweepVariable::N,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("expected M or N, got `{other}`"),
                        ))
                    }
                }
            }
            "sweep_values" => self.sweep_values = parse_list(key, value)?,
            "complexity_m" => self.complexity_m = parse_list(key, value)?,
            "complexity_n" => self.complexity_n = parse_list(key, value)?,
            "experiment" => self.experiment = value.to_string(),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Applies every assignment of a config text (`#` starts a comment).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    line,
                    format!("line {} is not a `key = value` pair", number + 1),
                )
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.train_config().validate()?;
        let positive = [
            ("Q", self.q),
            ("V", self.v),
            ("batch_size", self.batch_size),
            ("trials", self.trials),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.link == Link::Communication && self.user >= self.system.k {
            return Err(Error::config(
                "user",
                format!("must be below K = {}", self.system.k),
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction", "must lie in (0, 1)"));
        }
        for (key, grid) in [
            ("train_snr_db", &self.train_snr_db),
            ("test_snr_db", &self.test_snr_db),
            ("sweep_snr_db", &self.sweep_snr_db),
        ] {
            if grid.is_empty() {
                return Err(Error::config(key, "must list at least one SNR"));
            }
            if grid.iter().any(|s| !(s.abs() <= 200.0)) {
                return Err(Error::config(key, "SNR values must be finite dB figures"));
            }
        }
        if !(self.ffn_lr > 0.0) {
            return Err(Error::config("ffn_lr", "must be positive"));
        }
        if !(self.elm_lambda >= 0.0) {
            return Err(Error::config("elm_lambda", "must be nonnegative"));
        }
        if self.link == Link::Communication {
            crate::cgan::ce_generator_spec(&self.system)
                .map_err(|e| Error::config("N", e.to_string()))?;
        }
        Ok(())
    }

    /// Digest of every field that influences generated data or trained
    /// models (not evaluation-only settings).
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            system: &'a SystemConfig,
            link: Link,
            user: usize,
            q: usize,
            v: usize,
            train_snr_db: &'a [f64],
            test_fraction: f64,
            train: TrainConfig,
            ffn: FfnConfig,
            elm: ElmConfig,
        }
        let fingerprint = Fingerprint {
            system: &self.system,
            link: self.link,
            user: self.user,
            q: self.q,
            v: self.v,
            train_snr_db: &self.train_snr_db,
            test_fraction: self.test_fraction,
            train: self.train_config(),
            ffn: self.ffn_config(),
            elm: self.elm_config(),
        };
        let bytes = serde_json::to_vec(&fingerprint).expect("plain data serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Comma-separated values, each either a number or an inclusive
/// `start:step:stop` range.
pub fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse(key, single)?),
            [start, step, stop] => {
                let (start, step, stop): (f64, f64, f64) =
                    (parse(key, start)?, parse(key, step)?, parse(key, stop)?);
                if !(step > 0.0) || stop < start {
                    return Err(Error::config(key, format!("bad range `{item}`")));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                out.extend((0..count).map(|i| start + step * i as f64));
            }
            _ => return Err(Error::config(key, format!("bad grid entry `{item}`"))),
        }
    }
    Ok(out)
}

/// Defaults for `profile`, then the file at `path` (if any), then `overrides`.
pub fn parse_config(
    path: Option<&Path>,
    profile: Profile,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut config = RunConfig::for_profile(profile);
    if let Some(path) = path {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        config.apply_text(&std::fs::read_to_string(path)?)?;
    }
    for (key, value) in overrides {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.apply_text("\n# nothing here\n   \n").unwrap();
        assert_eq!(c, RunConfig::for_profile(Profile::Desk));
        assert_eq!((c.system.m, c.system.n, c.system.k), (4, 30, 3));
        assert_eq!(c.system.rho, 1e4);
        assert_eq!((c.batch_size, c.alpha), (16, 100.0));
        assert_eq!(c.test_snr_db.len(), 17);
        assert_eq!(c.test_snr_db[16], 30.0);
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.apply_text("M=0").unwrap();
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "M"),
            other => panic!("unexpected {other:?}"),
        }
        match c.set("bogus", "1") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("unexpected {other:?}"),
        }
        match c.set("epochs", "many") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epochs"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coupled_sizes_follow_overrides() {
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.apply_text("N = 50  # more elements").unwrap();
        assert_eq!((c.system.n, c.system.c()), (50, 50));
        assert_eq!(c.system.p(), 4);
    }

    #[test]
    fn grids_and_hash() {
        assert_eq!(parse_grid("g", "10:5:20").unwrap(), vec![10.0, 15.0, 20.0]);
        assert_eq!(parse_grid("g", "-5, 10").unwrap(), vec![-5.0, 10.0]);
        assert!(parse_grid("g", "1:0:3").is_err());
        let a = RunConfig::for_profile(Profile::Desk);
        let mut b = a.clone();
        b.trials = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.epochs = 3;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
