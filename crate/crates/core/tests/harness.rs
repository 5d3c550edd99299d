use std::collections::BTreeMap;
use std::path::Path;

use risgan_core::channel::CMatrix;
use risgan_core::dataset::Link;
use risgan_core::harness::{
    self, cmd_complexity, cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, monte_carlo_rows,
    parse_config, CsvReport, Profile, RunConfig,
};
use risgan_core::metrics::Estimator;
use risgan_core::Error;

fn overrides(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// A desk configuration shrunk so the full pipeline runs in well under a second.
fn small(link: &str, extra: &[(&str, &str)]) -> RunConfig {
    let mut all = vec![
        ("link", link),
        ("M", "2"),
        ("N", "4"),
        ("Q", "12"),
        ("V", "3"),
        ("epochs", "2"),
        ("trials", "20"),
        ("seed", "3"),
    ];
    all.extend_from_slice(extra);
    parse_config(None, Profile::Desk, &overrides(&all)).unwrap()
}

struct ZeroEstimator {
    link: Link,
    rows: usize,
    cols: usize,
}

impl Estimator for ZeroEstimator {
    fn link(&self) -> Link {
        self.link
    }

    fn estimate_batch(&self, raw: &[Vec<f64>]) -> risgan_core::Result<Vec<CMatrix>> {
        Ok(raw
            .iter()
            .map(|_| CMatrix::zeros((self.rows, self.cols)))
            .collect())
    }
}

fn pipeline(config: &RunConfig, out: &Path) -> Vec<Vec<u8>> {
    cmd_generate(config, out).unwrap();
    cmd_train(config, out).unwrap();
    cmd_evaluate(config, out)
        .unwrap()
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn unknown_and_malformed_overrides_name_the_key() {
    for (key, value) in [
        ("bogus", "1"),
        ("M", "four"),
        ("M", "0"),
        ("link", "radio"),
        ("train_snr_db", "1:0:3"),
    ] {
        let err = parse_config(None, Profile::Desk, &overrides(&[(key, value)])).unwrap_err();
        match err {
            Error::Config { key: k, .. } => assert_eq!(k, key),
            other => panic!("unexpected error {other:?}"),
        }
    }
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# comment\nM = 8\nepochs = 7\n").unwrap();
    let config = parse_config(Some(&path), Profile::Desk, &overrides(&[("epochs", "3")])).unwrap();
    assert_eq!(config.system.m, 8);
    assert_eq!(config.epochs, 3);
    let missing = parse_config(Some(&dir.path().join("absent.cfg")), Profile::Desk, &[]);
    assert!(missing.is_err());
}

#[test]
fn evaluation_covers_every_snr_for_every_method() {
    for link in ["sensing", "comm"] {
        let config = small(link, &[]);
        let dir = tempfile::tempdir().unwrap();
        let bytes = pipeline(&config, dir.path());
        let report = CsvReport::parse(std::str::from_utf8(&bytes[0]).unwrap()).unwrap();
        let method = report.column("method").unwrap();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for row in &report.rows {
            *counts.entry(row[method].clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| c == 17), "{counts:?}");
        assert_eq!(report.footer_value("link"), Some(config.link.name()));
        assert_eq!(
            report.footer_value("config_hash"),
            Some(config.config_hash().as_str())
        );
    }
}

#[test]
fn pipeline_output_is_byte_identical_across_runs() {
    let config = small("sensing", &[]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(pipeline(&config, a.path()), pipeline(&config, b.path()));
}

#[test]
fn zero_estimator_scores_unit_nmse() {
    for link in ["sensing", "comm"] {
        let config = small(link, &[]);
        let (rows, cols) = config.link.channel_dim(&config.system);
        let zero = ZeroEstimator {
            link: config.link,
            rows,
            cols,
        };
        let table = monte_carlo_rows(
            &config,
            &[("zero", &zero as &dyn Estimator)],
            &[0.0, 20.0],
            "snr_db",
            None,
            0,
        )
        .unwrap();
        assert_eq!(table.len(), 2);
        for row in table {
            assert!((row.nmse - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn stale_artifacts_are_rejected() {
    let config = small("sensing", &[]);
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&config, dir.path()).unwrap();
    let changed = small("sensing", &[("Q", "13")]);
    assert!(matches!(
        cmd_train(&changed, dir.path()),
        Err(Error::ConfigHashMismatch { .. })
    ));
    cmd_train(&config, dir.path()).unwrap();
    let retuned = small("sensing", &[("alpha", "50")]);
    assert!(matches!(
        cmd_evaluate(&retuned, dir.path()),
        Err(Error::ConfigHashMismatch { .. })
    ));
}

#[test]
fn missing_artifacts_are_reported() {
    let config = small("comm", &[]);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        cmd_train(&config, dir.path()),
        Err(Error::MissingArtifact(_))
    ));
    cmd_generate(&config, dir.path()).unwrap();
    assert!(matches!(
        cmd_evaluate(&config, dir.path()),
        Err(Error::MissingArtifact(_))
    ));
}

#[test]
fn sweep_reports_each_value_snr_and_method() {
    let config = small(
        "sensing",
        &[("sweep_variable", "M"), ("sweep_values", "2,3")],
    );
    let dir = tempfile::tempdir().unwrap();
    let path = cmd_sweep(&config, dir.path()).unwrap();
    let report = CsvReport::read(&path).unwrap();
    assert_eq!(report.rows.len(), 2 * config.sweep_snr_db.len() * 4);
    let value = report.column("sweep_value").unwrap();
    assert!(report
        .rows
        .iter()
        .all(|r| r[value] == "2" || r[value] == "3"));
}

#[test]
fn complexity_report_matches_counted_operations() {
    let config = small(
        "sensing",
        &[("complexity_m", "2,4"), ("complexity_n", "10,20")],
    );
    let dir = tempfile::tempdir().unwrap();
    let report = CsvReport::read(&cmd_complexity(&config, dir.path()).unwrap()).unwrap();
    assert!(!report.rows.is_empty());
    for (closed, counted) in [
        ("closed_additions", "counted_additions"),
        ("closed_multiplications", "counted_multiplications"),
    ] {
        let (c, k) = (
            report.column(closed).unwrap(),
            report.column(counted).unwrap(),
        );
        assert!(report.rows.iter().all(|r| r[c] == r[k]));
    }
    assert_eq!(
        harness::methods(Link::Communication)[0],
        harness::cgan_method(Link::Communication)
    );
}
