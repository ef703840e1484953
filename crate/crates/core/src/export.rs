//! CSV and JSON files. Numbers are written at full precision so that
//! reading a file back reproduces the values exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Rates;
use crate::sim::SimResult;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub tau: usize,
    pub service: f64,
    pub utilization: f64,
}

pub fn rate_rows(table: &[Rates]) -> Vec<RateRow> {
    table
        .iter()
        .enumerate()
        .map(|(i, r)| RateRow {
            tau: i + 1,
            service: r.service,
            utilization: r.utilization,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub nu_bar: f64,
    pub utilization: f64,
}

pub fn curve_rows(points: &[(f64, f64)]) -> Vec<CurveRow> {
    points
        .iter()
        .map(|&(nu_bar, utilization)| CurveRow { nu_bar, utilization })
        .collect()
}

/// One replication, or the pooled estimate when `replication` is "pooled".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub replication: String,
    pub utilization: f64,
    pub utilization_se: Option<f64>,
    pub service_rate: f64,
    pub service_rate_se: Option<f64>,
    pub empty_queue_fraction: f64,
    pub queue_mean: f64,
    pub queue_max: u64,
    pub oracle_utilization: f64,
    /// Empirical minus oracle utilization.
    pub oracle_delta: f64,
}

pub fn sim_rows(r: &SimResult, oracle_utilization: f64) -> Vec<SimRow> {
    let mut rows: Vec<SimRow> = r
        .replications
        .iter()
        .map(|rep| SimRow {
            replication: rep.replication.to_string(),
            utilization: rep.utilization,
            utilization_se: None,
            service_rate: rep.service_rate,
            service_rate_se: None,
            empty_queue_fraction: rep.empty_queue_fraction,
            queue_mean: rep.queue_mean,
            queue_max: rep.queue_max,
            oracle_utilization,
            oracle_delta: rep.utilization - oracle_utilization,
        })
        .collect();
    rows.push(SimRow {
        replication: "pooled".into(),
        utilization: r.utilization.mean,
        utilization_se: r.utilization.std_error,
        service_rate: r.service_rate.mean,
        service_rate_se: r.service_rate.std_error,
        empty_queue_fraction: r.empty_queue_fraction.mean,
        queue_mean: r.queue_mean.mean,
        queue_max: r.queue_max,
        oracle_utilization,
        oracle_delta: r.utilization.mean - oracle_utilization,
    });
    rows
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExportError> {
    let csv_err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExportError> {
    let csv_err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExportError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::threshold_rates;
    use crate::model::ServerSpec;

    #[test]
    fn rate_rows_are_one_based() {
        let rows = rate_rows(&threshold_rates(&ServerSpec::reference()));
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].tau, 1);
        assert_eq!(rows[4].tau, 5);
    }

    #[test]
    fn missing_file_reports_path() {
        let e = read_csv::<RateRow>(Path::new("/nonexistent/rates.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/rates.csv"));
    }
}
