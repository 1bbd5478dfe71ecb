use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{BenchmarkReport, TrialRecord};
use crate::error::{CoreError, Result};
use crate::strategies::StrategyKind;

pub const RECORDS_FILE: &str = "runs.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_COLUMNS: [&str; 5] = [
    "strategy",
    "final_mpe_mean",
    "final_mpe_std",
    "best_fr",
    "runtime_mean_s",
];

/// One row of the summary table. Missing values are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub final_mpe_mean: Option<f64>,
    pub final_mpe_std: Option<f64>,
    pub best_fr: Option<f64>,
    pub runtime_mean_s: f64,
}

impl SummaryRow {
    pub fn of(report: &BenchmarkReport) -> Vec<Self> {
        report
            .summaries
            .iter()
            .map(|s| SummaryRow {
                strategy: s.strategy,
                final_mpe_mean: s.final_mpe.map(|m| m.mean),
                final_mpe_std: s.final_mpe.map(|m| m.std),
                best_fr: s.best_fr,
                runtime_mean_s: s.runtime_s.mean,
            })
            .collect()
    }
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

/// Writes `runs.jsonl` (one record per line) and `summary.csv` into `dir`,
/// creating it if needed. Returns both paths.
pub fn export_results(
    report: &BenchmarkReport,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;

    let records_path = dir.join(RECORDS_FILE);
    let file = File::create(&records_path).map_err(|e| CoreError::io(&records_path, e))?;
    let mut out = BufWriter::new(file);
    for record in &report.records {
        let line = serde_json::to_string(record).map_err(|e| CoreError::Format {
            path: records_path.clone(),
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| CoreError::io(&records_path, e))?;
    }
    out.flush().map_err(|e| CoreError::io(&records_path, e))?;

    let summary_path = dir.join(SUMMARY_FILE);
    let csv_err = |e: csv::Error| CoreError::Format {
        path: summary_path.clone(),
        message: e.to_string(),
    };
    let file = File::create(&summary_path).map_err(|e| CoreError::io(&summary_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for row in SummaryRow::of(report) {
        w.write_record([
            row.strategy.to_string(),
            opt(row.final_mpe_mean),
            opt(row.final_mpe_std),
            opt(row.best_fr),
            sci(row.runtime_mean_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CoreError::io(&summary_path, e))?;
    Ok((records_path, summary_path))
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| CoreError::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(records)
}

/// Rebuilds a report, statistics included, from a record file.
pub fn load_report(path: impl AsRef<Path>) -> Result<BenchmarkReport> {
    let path = path.as_ref();
    let records = load_records(path)?;
    let name = records
        .first()
        .map(|r| r.benchmark.clone())
        .unwrap_or_default();
    BenchmarkReport::from_records(name, records).map_err(|e| CoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let fmt = |e: csv::Error| CoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(fmt)?;
    if header.iter().ne(SUMMARY_COLUMNS) {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    reader.deserialize().map(|r| r.map_err(fmt)).collect()
}
