//! Seeded end-to-end pipelines: generate, train, evaluate, sweep and
//! complexity reporting.
//!
//! Artifacts live in one output directory:
//!
//! * `{link}_train.bin`, `{link}_test.bin`: dataset splits
//! * `{link}_{method}.ckpt`: trained models (`cgan`, `ffn`, `elm`)
//! * `{link}_nmse.csv`: Monte-Carlo NMSE per test SNR and method
//! * `{link}_split.csv`: NMSE on the held-out split per training SNR
//! * `{link}_sweep_{M|N}.csv`, `complexity.csv`

mod config;
mod report;

pub use config::{parse_config, parse_grid, Profile, RunConfig, SweepVariable};
pub use report::{
    method_means, nmse_cells, nmse_report, CsvReport, NmseRow, ARTIFACT_VERSION, NMSE_COLUMNS,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{elm_baseline, ffn_baseline, LsEstimator, RegressionKind, RegressionModel};
use crate::cgan::{
    build_cgan, ce_discriminator_spec, ce_generator_spec, se_discriminator_spec, se_generator_spec,
    CganModel, EpochStats,
};
use crate::channel::SystemConfig;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::complexity::{complexity_ce, complexity_se, ffn_benchmark, reduction, CeSizes};
use crate::dataset::{
    generate_dataset, load_dataset, save_dataset, split, Dataset, GenerationPlan, Link,
};
use crate::error::{Error, Result};
use crate::metrics::{nmse_mc, nmse_on_pairs, Estimator, Scenario};
use crate::nn::{count_operations, Network, NetworkSpec, OpCount};
use crate::rng::{stream_rng, Stream};

pub fn dataset_path(out: &Path, link: Link, part: &str) -> PathBuf {
    out.join(format!("{}_{part}.bin", link.name()))
}

pub fn checkpoint_path(out: &Path, link: Link, method: &str) -> PathBuf {
    out.join(format!("{}_{method}.ckpt", link.name()))
}

pub fn cgan_method(link: Link) -> &'static str {
    match link {
        Link::Sensing => "se_cgan",
        Link::Communication => "ce_cgan",
    }
}

/// Method labels in report order.
pub fn methods(link: Link) -> [&'static str; 4] {
    [cgan_method(link), "ls", "ffn", "elm"]
}

fn plan(config: &RunConfig) -> GenerationPlan {
    GenerationPlan {
        snr_grid_db: config.train_snr_db.clone(),
        q: config.q,
        v: config.v,
        link: config.link,
        user: config.user,
        seed: config.seed(),
    }
}

/// Fingerprint of the settings that determine a dataset.
fn data_hash(meta: &crate::dataset::DatasetMeta) -> String {
    let key = (
        &meta.config,
        meta.link,
        meta.user,
        meta.q,
        meta.v,
        &meta.snr_grid_db,
        meta.seed,
        meta.test_fraction,
    );
    let bytes = serde_json::to_vec(&key).expect("plain data serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

fn expected_data_hash(config: &RunConfig) -> String {
    data_hash(&crate::dataset::DatasetMeta {
        config: config.system.clone(),
        link: config.link,
        user: (config.link == Link::Communication).then_some(config.user),
        q: config.q,
        v: config.v,
        snr_grid_db: config.train_snr_db.clone(),
        seed: config.seed(),
        test_fraction: Some(config.test_fraction),
        target_scale: None,
    })
}

fn check_dataset(dataset: &Dataset, config: &RunConfig) -> Result<()> {
    let found = data_hash(&dataset.meta);
    let current = expected_data_hash(config);
    if found != current {
        return Err(Error::ConfigHashMismatch {
            artifact: found,
            current,
        });
    }
    Ok(())
}

/// Generates the corpus for `config.link` and writes the train/test split.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dataset = generate_dataset(&config.system, &plan(config))?;
    let mut rng = stream_rng(config.seed(), Stream::Split, 0);
    let (train, test) = split(&dataset, config.test_fraction, &mut rng)?;
    let paths = vec![
        dataset_path(out, config.link, "train"),
        dataset_path(out, config.link, "test"),
    ];
    save_dataset(&train, &paths[0])?;
    save_dataset(&test, &paths[1])?;
    Ok(paths)
}

/// Checkpoint metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub method: String,
    pub link: Link,
    pub rho: f64,
    pub system: SystemConfig,
    pub config_hash: String,
    pub cgan_history: Vec<EpochStats>,
    pub regression_history: Vec<f64>,
}

/// The three learned estimators of one configuration.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub cgan: CganModel,
    pub ffn: RegressionModel,
    pub elm: RegressionModel,
}

/// Trains every learned estimator on a raw training split.
pub fn train_models(config: &RunConfig, train: &Dataset) -> Result<TrainedModels> {
    let prepared = train.prepared(config.system.rho)?;
    let mut init = stream_rng(config.seed(), Stream::Init, 0);
    let mut cgan = build_cgan(&config.system, config.link, &mut init)?;
    cgan.train(&prepared, &config.train_config())?;
    let ffn = ffn_baseline(&prepared, &config.ffn_config())?;
    let elm = elm_baseline(&prepared, &config.elm_config())?;
    Ok(TrainedModels { cgan, ffn, elm })
}

/// Trains on the stored training split and writes one checkpoint per model.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let train = load_dataset(&dataset_path(out, config.link, "train"))?;
    check_dataset(&train, config)?;
    let models = train_models(config, &train)?;
    let hash = config.config_hash();
    let meta = |method: &str| ModelMeta {
        method: method.to_string(),
        link: config.link,
        rho: config.system.rho,
        system: config.system.clone(),
        config_hash: hash.clone(),
        cgan_history: Vec::new(),
        regression_history: Vec::new(),
    };
    let cgan_path = checkpoint_path(out, config.link, "cgan");
    let mut cgan_meta = meta(cgan_method(config.link));
    cgan_meta.cgan_history = models.cgan.history.clone();
    save_checkpoint(
        &cgan_path,
        &cgan_meta,
        &[&models.cgan.generator, &models.cgan.discriminator],
    )?;
    let mut paths = vec![cgan_path];
    for (name, model) in [("ffn", &models.ffn), ("elm", &models.elm)] {
        let path = checkpoint_path(out, config.link, name);
        let mut m = meta(name);
        m.regression_history = model.history.clone();
        save_checkpoint(&path, &m, &[&model.network])?;
        paths.push(path);
    }
    Ok(paths)
}

fn load_meta_checked(path: &Path, config: &RunConfig) -> Result<(ModelMeta, Vec<Network>)> {
    let (meta, nets): (ModelMeta, Vec<Network>) = load_checkpoint(path)?;
    let current = config.config_hash();
    if meta.config_hash != current {
        return Err(Error::ConfigHashMismatch {
            artifact: meta.config_hash,
            current,
        });
    }
    Ok((meta, nets))
}

/// Loads the checkpoints written by [`cmd_train`].
pub fn load_models(config: &RunConfig, out: &Path) -> Result<TrainedModels> {
    let (meta, mut nets) = load_meta_checked(&checkpoint_path(out, config.link, "cgan"), config)?;
    if nets.len() != 2 {
        return Err(Error::Format(
            "CGAN checkpoint must hold two networks".into(),
        ));
    }
    let discriminator = nets.pop().expect("two networks");
    let generator = nets.pop().expect("two networks");
    let cgan = CganModel {
        generator,
        discriminator,
        link: meta.link,
        rho: meta.rho,
        config: meta.system,
        history: meta.cgan_history,
    };
    let regression = |name: &str, kind: RegressionKind| -> Result<RegressionModel> {
        let (meta, mut nets) = load_meta_checked(&checkpoint_path(out, config.link, name), config)?;
        let network = nets
            .pop()
            .ok_or_else(|| Error::Format(format!("{name} checkpoint holds no network")))?;
        Ok(RegressionModel {
            kind,
            network,
            link: meta.link,
            rho: meta.rho,
            config: meta.system,
            history: meta.regression_history,
        })
    };
    Ok(TrainedModels {
        cgan,
        ffn: regression("ffn", RegressionKind::Ffn)?,
        elm: regression("elm", RegressionKind::Elm)?,
    })
}

/// Monte-Carlo NMSE rows for every estimator at every SNR in `snrs`. All
/// estimators see the same draws at a given SNR.
pub fn monte_carlo_rows(
    config: &RunConfig,
    estimators: &[(&str, &dyn Estimator)],
    snrs: &[f64],
    sweep_variable: &str,
    sweep_value: Option<f64>,
    stream_base: usize,
) -> Result<Vec<NmseRow>> {
    let mut rows = Vec::new();
    for (i, &snr) in snrs.iter().enumerate() {
        let scenario = Scenario {
            config: config.system.clone(),
            link: config.link,
            user: config.user,
            snr_db: snr,
        };
        for (name, estimator) in estimators {
            let nmse = nmse_mc(
                *estimator,
                &scenario,
                config.trials,
                config.seed(),
                stream_base + i,
            )?;
            rows.push(NmseRow {
                sweep_variable: sweep_variable.to_string(),
                sweep_value: sweep_value.unwrap_or(snr),
                snr_db: snr,
                method: name.to_string(),
                trials: config.trials,
                nmse,
            });
        }
    }
    Ok(rows)
}

fn estimator_table<'a>(
    models: &'a TrainedModels,
    ls: &'a LsEstimator,
) -> Vec<(&'static str, &'a dyn Estimator)> {
    let [cgan, ls_name, ffn, elm] = methods(models.cgan.link);
    vec![
        (cgan, &models.cgan as &dyn Estimator),
        (ls_name, ls as &dyn Estimator),
        (ffn, &models.ffn as &dyn Estimator),
        (elm, &models.elm as &dyn Estimator),
    ]
}

/// Evaluates the stored models: Monte-Carlo NMSE over the test grid and
/// NMSE on the held-out split grouped by training SNR.
pub fn cmd_evaluate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let models = load_models(config, out)?;
    let test = load_dataset(&dataset_path(out, config.link, "test"))?;
    check_dataset(&test, config)?;
    let ls = LsEstimator::new(&config.system, config.link)?;
    let estimators = estimator_table(&models, &ls);
    let hash = config.config_hash();

    let rows = monte_carlo_rows(config, &estimators, &config.test_snr_db, "snr_db", None, 0)?;
    let nmse_path = out.join(format!("{}_nmse.csv", config.link.name()));
    nmse_report(&rows, config.seed(), &hash, config.link.name())?.write(&nmse_path)?;

    let mut split_rows = Vec::new();
    for &snr in &config.train_snr_db {
        let pairs: Vec<_> = test
            .pairs
            .iter()
            .filter(|p| p.snr_db == snr)
            .cloned()
            .collect();
        if pairs.is_empty() {
            continue;
        }
        for (name, estimator) in &estimators {
            split_rows.push(NmseRow {
                sweep_variable: "snr_db".into(),
                sweep_value: snr,
                snr_db: snr,
                method: name.to_string(),
                trials: pairs.len(),
                nmse: nmse_on_pairs(*estimator, &config.system, &pairs)?,
            });
        }
    }
    let split_path = out.join(format!("{}_split.csv", config.link.name()));
    nmse_report(&split_rows, config.seed(), &hash, config.link.name())?.write(&split_path)?;
    Ok(vec![nmse_path, split_path])
}

/// Retrains and evaluates every method for each value of the sweep variable
/// at the sweep SNRs.
pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    let variable = match config.sweep_variable {
        SweepVariable::M => "M",
        SweepVariable::N => "N",
    };
    if config.sweep_values.is_empty() {
        return Err(Error::config(
            "sweep_values",
            "must list at least one value",
        ));
    }
    let mut rows = Vec::new();
    for (index, &value) in config.sweep_values.iter().enumerate() {
        let mut point = config.clone();
        match config.sweep_variable {
            SweepVariable::M => point.system.m = value,
            SweepVariable::N => point.system.n = value,
        }
        point
            .validate()
            .map_err(|e| Error::config("sweep_values", format!("{variable} = {value}: {e}")))?;
        let dataset = generate_dataset(&point.system, &plan(&point))?;
        let mut rng = stream_rng(point.seed(), Stream::Split, 0);
        let (train, _) = split(&dataset, point.test_fraction, &mut rng)?;
        let models = train_models(&point, &train)?;
        let ls = LsEstimator::new(&point.system, point.link)?;
        let estimators = estimator_table(&models, &ls);
        rows.extend(monte_carlo_rows(
            &point,
            &estimators,
            &point.sweep_snr_db,
            variable,
            Some(value as f64),
            (index + 1) << 12,
        )?);
    }
    let path = out.join(format!("{}_sweep_{variable}.csv", config.link.name()));
    nmse_report(
        &rows,
        config.seed(),
        &config.config_hash(),
        config.link.name(),
    )?
    .write(&path)?;
    Ok(path)
}

pub const COMPLEXITY_COLUMNS: [&str; 12] = [
    "network",
    "M",
    "N",
    "part",
    "closed_additions",
    "closed_multiplications",
    "counted_additions",
    "counted_multiplications",
    "benchmark_additions",
    "benchmark_multiplications",
    "reduction_additions",
    "reduction_multiplications",
];

/// Operation count of `spec` after folding its batchnorm layers.
pub fn counted_ops(spec: &NetworkSpec) -> Result<OpCount> {
    let mut rng = stream_rng(0, Stream::Init, 0);
    let folded = Network::init(spec.clone(), &mut rng).folded()?;
    count_operations(&folded.spec)
}

fn complexity_rows(
    report: &mut CsvReport,
    network: &str,
    system: &SystemConfig,
    closed: crate::complexity::CganComplexity,
    counted_g: OpCount,
    counted_d: OpCount,
    benchmark: OpCount,
) -> Result<()> {
    let parts = [
        ("generator", closed.generator, counted_g),
        ("discriminator", closed.discriminator, counted_d),
        ("total", closed.total, counted_g + counted_d),
    ];
    for (part, closed, counted) in parts {
        let (bench, red) = if part == "total" {
            let r = reduction(benchmark, closed)?;
            (
                [
                    benchmark.additions.to_string(),
                    benchmark.multiplications.to_string(),
                ],
                [r.additions.to_string(), r.multiplications.to_string()],
            )
        } else {
            (Default::default(), Default::default())
        };
        report.push(vec![
            network.to_string(),
            system.m.to_string(),
            system.n.to_string(),
            part.to_string(),
            closed.additions.to_string(),
            closed.multiplications.to_string(),
            counted.additions.to_string(),
            counted.multiplications.to_string(),
            bench[0].clone(),
            bench[1].clone(),
            red[0].clone(),
            red[1].clone(),
        ])?;
    }
    Ok(())
}

/// Closed-form and counted operations of SE-CGAN over `complexity_m` and of
/// CE-CGAN over `complexity_n`, with reductions against the FFN benchmark.
pub fn complexity_report(config: &RunConfig) -> Result<CsvReport> {
    let mut report = CsvReport::new(&COMPLEXITY_COLUMNS);
    let hidden = crate::baselines::BASELINE_HIDDEN;
    for &m in &config.complexity_m {
        let system = SystemConfig {
            m,
            ..config.system.clone()
        };
        system.validate()?;
        let g = counted_ops(&se_generator_spec(&system)?)?;
        let d = counted_ops(&se_discriminator_spec(&system)?)?;
        let bench = ffn_benchmark(2 * m * system.p(), 2 * m * m, hidden);
        complexity_rows(
            &mut report,
            "se_cgan",
            &system,
            complexity_se(m),
            g,
            d,
            bench,
        )?;
    }
    for &n in &config.complexity_n {
        let system = SystemConfig {
            n,
            ..config.system.clone()
        };
        system.validate()?;
        let g = counted_ops(&ce_generator_spec(&system)?)?;
        let d = counted_ops(&ce_discriminator_spec(&system)?)?;
        let closed = complexity_ce(&CeSizes::for_system(system.m, n))?;
        let bench = ffn_benchmark(2 * system.c() * system.p(), 2 * system.m * n, hidden);
        complexity_rows(&mut report, "ce_cgan", &system, closed, g, d, bench)?;
    }
    report.note("seed", config.seed());
    report.note("config_hash", config.config_hash());
    report.note("version", ARTIFACT_VERSION);
    Ok(report)
}

pub fn cmd_complexity(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    let path = out.join("complexity.csv");
    complexity_report(config)?.write(&path)?;
    Ok(path)
}
