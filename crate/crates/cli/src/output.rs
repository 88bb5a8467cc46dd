//! CSV artefacts written by the commands. Floats use Rust's shortest
//! round-trip formatting so identical runs produce identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::experiment::SplitOutcome;

pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RELIABILITY_CSV: &str = "reliability.csv";
pub const RECALIBRATION_CSV: &str = "recalibration.csv";
pub const CURVE_CSV: &str = "curve.csv";

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub model: String,
    pub lambda: f64,
    pub split: usize,
    pub calib_error: f64,
    pub rmse: f64,
    pub nll: f64,
    pub n: usize,
}

/// One line of `recalibration.csv`; `worse` is `*` when recalibration
/// increased the calibration error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecalRow {
    pub dataset: String,
    pub model: String,
    pub lambda: f64,
    pub split: usize,
    pub calib_error: f64,
    pub calib_error_iso: f64,
    pub worse: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Per-λ aggregate over splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub lambda: f64,
    pub splits: usize,
    pub calib_error_mean: f64,
    pub calib_error_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub nll_mean: f64,
    pub nll_std: f64,
}

pub fn metric_rows(dataset: &str, model: &str, outcomes: &[SplitOutcome]) -> Vec<MetricRow> {
    outcomes
        .iter()
        .map(|o| MetricRow {
            dataset: dataset.into(),
            model: model.into(),
            lambda: o.lambda,
            split: o.split,
            calib_error: o.test.calib_error,
            rmse: o.test.rmse,
            nll: o.test.nll,
            n: o.test.n,
        })
        .collect()
}

pub fn recal_rows(dataset: &str, model: &str, outcomes: &[SplitOutcome]) -> Vec<RecalRow> {
    outcomes
        .iter()
        .map(|o| RecalRow {
            dataset: dataset.into(),
            model: model.into(),
            lambda: o.lambda,
            split: o.split,
            calib_error: o.test.calib_error,
            calib_error_iso: o.test_iso_calib_error,
            worse: if o.test_iso_calib_error > o.test.calib_error { "*".into() } else { String::new() },
        })
        .collect()
}

/// Groups rows by `(dataset, model, lambda)` in first-seen order.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, f64)> = Vec::new();
    for r in rows {
        let k = (r.dataset.clone(), r.model.clone(), r.lambda);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, model, lambda)| {
            let group: Vec<&MetricRow> =
                rows.iter().filter(|r| r.dataset == dataset && r.model == model && r.lambda == lambda).collect();
            let stat = |f: fn(&MetricRow) -> f64| MeanStd::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (c, r, n) = (stat(|r| r.calib_error), stat(|r| r.rmse), stat(|r| r.nll));
            SummaryRow {
                dataset,
                model,
                lambda,
                splits: group.len(),
                calib_error_mean: c.mean,
                calib_error_std: c.std,
                rmse_mean: r.mean,
                rmse_std: r.std,
                nll_mean: n.mean,
                nll_std: n.std,
            }
        })
        .collect()
}

pub fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_rows<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<S>, _>>()
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

/// `dataset,model,lambda,split,p,observed` for every level of every split.
pub fn write_reliability(path: &Path, dataset: &str, model: &str, outcomes: &[SplitOutcome]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Point<'a> {
        dataset: &'a str,
        model: &'a str,
        lambda: f64,
        split: usize,
        p: f64,
        observed: f64,
    }
    let pts: Vec<Point> = outcomes
        .iter()
        .flat_map(|o| {
            o.test.reliability.iter().map(move |&(p, observed)| Point {
                dataset,
                model,
                lambda: o.lambda,
                split: o.split,
                p,
                observed,
            })
        })
        .collect();
    write_rows(path, &pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_by_hand() {
        let v = [44.0, 41.5, 50.25, 39.0, 47.75];
        let m = MeanStd::of(&v);
        let mean = (44.0 + 41.5 + 50.25 + 39.0 + 47.75) / 5.0;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert!((m.mean - 44.5).abs() < 1e-12);
        assert!((m.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![MetricRow {
            dataset: "d".into(),
            model: "mc_dropout".into(),
            lambda: 20.0,
            split: 3,
            calib_error: 0.123_456_789_012_345_67,
            rmse: 1.0 / 3.0,
            nll: -0.5,
            n: 40,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_rows::<MetricRow>(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("dataset,model,lambda,split,calib_error,rmse,nll,n\n"));
    }
}
