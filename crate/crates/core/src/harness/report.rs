//! CSV reports with a `#`-commented metadata footer.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct CsvReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Written after the table as `# key=value` lines, in insertion order.
    pub footer: Vec<(String, String)>,
}

impl CsvReport {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidDimension(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.footer.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            writer.write_record(row).map_err(csv_error)?;
        }
        let mut bytes = writer
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))?;
        for (key, value) in &self.footer {
            bytes.extend_from_slice(format!("# {key}={value}\n").as_bytes());
        }
        Ok(bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut footer = Vec::new();
        let mut table = String::new();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("bad footer line `{line}`")))?;
                footer.push((k.to_string(), v.to_string()));
            } else {
                table.push_str(line);
                table.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(table.as_bytes());
        let header = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(csv_error)?;
        Ok(Self {
            header,
            rows,
            footer,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn footer_value(&self, key: &str) -> Option<&str> {
        self.footer
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// One NMSE measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub method: String,
    pub trials: usize,
    pub nmse: f64,
}

pub const NMSE_COLUMNS: [&str; 7] = [
    "sweep_variable",
    "sweep_value",
    "snr_db",
    "method",
    "trials",
    "nmse",
    "nmse_db",
];

/// Mean NMSE per method, in row order.
pub fn method_means(rows: &[(String, f64)]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (method, nmse) in rows {
        let entry = sums.entry(method.clone()).or_insert((0.0, 0));
        entry.0 += nmse;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(m, (s, n))| (m, s / n as f64))
        .collect()
}

/// Table of NMSE rows with provenance and per-method means in the footer.
pub fn nmse_report(
    rows: &[NmseRow],
    seed: u64,
    config_hash: &str,
    link: &str,
) -> Result<CsvReport> {
    let mut report = CsvReport::new(&NMSE_COLUMNS);
    for r in rows {
        if !(r.nmse >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{} at {} dB produced NMSE {}",
                r.method, r.snr_db, r.nmse
            )));
        }
        report.push(vec![
            r.sweep_variable.clone(),
            r.sweep_value.to_string(),
            r.snr_db.to_string(),
            r.method.clone(),
            r.trials.to_string(),
            r.nmse.to_string(),
            crate::metrics::to_db(r.nmse).to_string(),
        ])?;
    }
    report.note("link", link);
    report.note("seed", seed);
    report.note("config_hash", config_hash);
    report.note("version", ARTIFACT_VERSION);
    let pairs: Vec<(String, f64)> = rows.iter().map(|r| (r.method.clone(), r.nmse)).collect();
    for (method, mean) in method_means(&pairs) {
        report.note(&format!("mean_nmse.{method}"), mean);
    }
    Ok(report)
}

/// Reads back `(method, nmse)` pairs from a report written by [`nmse_report`].
pub fn nmse_cells(report: &CsvReport) -> Result<Vec<(String, f64)>> {
    let method = report
        .column("method")
        .ok_or_else(|| Error::Format("report has no method column".into()))?;
    let nmse = report
        .column("nmse")
        .ok_or_else(|| Error::Format("report has no nmse column".into()))?;
    report
        .rows
        .iter()
        .map(|row| {
            let value = row[nmse]
                .parse()
                .map_err(|_| Error::Format(format!("bad nmse cell `{}`", row[nmse])))?;
            Ok((row[method].clone(), value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_footer() {
        let rows = vec![
            NmseRow {
                sweep_variable: "snr_db".into(),
                sweep_value: -2.5,
                snr_db: -2.5,
                method: "ls".into(),
                trials: 10,
                nmse: 0.1 + 0.2,
            },
            NmseRow {
                sweep_variable: "snr_db".into(),
                sweep_value: 0.0,
                snr_db: 0.0,
                method: "ls".into(),
                trials: 10,
                nmse: 1.0 / 3.0,
            },
        ];
        let report = nmse_report(&rows, 5, "abc", "sensing").unwrap();
        let text = String::from_utf8(report.to_bytes().unwrap()).unwrap();
        let back = CsvReport::parse(&text).unwrap();
        assert_eq!(back, report);
        let means = method_means(&nmse_cells(&back).unwrap());
        let recorded: f64 = back.footer_value("mean_nmse.ls").unwrap().parse().unwrap();
        assert_eq!(means["ls"].to_bits(), recorded.to_bits());
    }
}
