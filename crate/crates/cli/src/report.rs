//! Mean ± std tables over splits, one column per λ setting.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;
use crate::output::{read_rows, MeanStd, MetricRow, RecalRow, METRICS_CSV, RECALIBRATION_CSV};

/// Cells whose mean is within this of the row minimum are all bolded.
pub const TIE_TOL: f64 = 1e-9;

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub stat: MeanStd,
    pub bold: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Bolds every present cell whose mean is within [`TIE_TOL`] of the smallest.
pub fn mark_best(cells: &mut [Option<Cell>]) {
    let min = cells.iter().flatten().map(|c| c.stat.mean).fold(f64::INFINITY, f64::min);
    for c in cells.iter_mut().flatten() {
        c.bold = c.stat.mean <= min + TIE_TOL;
    }
}

fn lambdas_of(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut ls: Vec<f64> = it.collect();
    ls.sort_by(f64::total_cmp);
    ls.dedup();
    ls
}

fn row_keys<'a>(it: impl Iterator<Item = (&'a str, &'a str)>) -> Vec<(String, String)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for (d, m) in it {
        if !keys.iter().any(|(a, b)| a == d && b == m) {
            keys.push((d.into(), m.into()));
        }
    }
    keys
}

fn stat_of(values: Vec<f64>) -> Option<Cell> {
    (!values.is_empty()).then(|| Cell {
        stat: MeanStd::of(&values),
        bold: false,
    })
}

/// One table per metric (calibration error, RMSE, NLL).
pub fn metric_tables(rows: &[MetricRow]) -> Vec<Table> {
    let lambdas = lambdas_of(rows.iter().map(|r| r.lambda));
    let keys = row_keys(rows.iter().map(|r| (r.dataset.as_str(), r.model.as_str())));
    let metrics: [(&str, fn(&MetricRow) -> f64); 3] = [
        ("calibration error", |r| r.calib_error),
        ("RMSE", |r| r.rmse),
        ("NLL", |r| r.nll),
    ];
    metrics
        .iter()
        .map(|(title, f)| Table {
            title: title.to_string(),
            columns: lambdas.iter().map(|l| format!("lambda={l}")).collect(),
            rows: keys
                .iter()
                .map(|(d, m)| {
                    let mut cells: Vec<Option<Cell>> = lambdas
                        .iter()
                        .map(|&l| {
                            stat_of(
                                rows.iter()
                                    .filter(|r| &r.dataset == d && &r.model == m && r.lambda == l)
                                    .map(f)
                                    .collect(),
                            )
                        })
                        .collect();
                    mark_best(&mut cells);
                    TableRow {
                        dataset: d.clone(),
                        model: m.clone(),
                        cells,
                    }
                })
                .collect(),
        })
        .collect()
}

/// Calibration error before and after isotonic recalibration, two columns
/// per λ.
pub fn recal_table(rows: &[RecalRow]) -> Table {
    let lambdas = lambdas_of(rows.iter().map(|r| r.lambda));
    let keys = row_keys(rows.iter().map(|r| (r.dataset.as_str(), r.model.as_str())));
    let mut columns = Vec::new();
    for l in &lambdas {
        columns.push(format!("lambda={l}"));
        columns.push(format!("lambda={l}+iso"));
    }
    Table {
        title: "calibration error with isotonic recalibration".into(),
        columns,
        rows: keys
            .iter()
            .map(|(d, m)| {
                let group = |l: f64| rows.iter().filter(move |r| &r.dataset == d && &r.model == m && r.lambda == l);
                let mut cells = Vec::new();
                for &l in &lambdas {
                    cells.push(stat_of(group(l).map(|r| r.calib_error).collect()));
                    cells.push(stat_of(group(l).map(|r| r.calib_error_iso).collect()));
                }
                mark_best(&mut cells);
                TableRow {
                    dataset: d.clone(),
                    model: m.clone(),
                    cells,
                }
            })
            .collect(),
    }
}

fn fmt_cell(c: &Option<Cell>) -> String {
    match c {
        None => "-".into(),
        Some(c) if c.bold => format!("**{:.4} ± {:.4}**", c.stat.mean, c.stat.std),
        Some(c) => format!("{:.4} ± {:.4}", c.stat.mean, c.stat.std),
    }
}

/// Plain-text rendering; the best cell of each row is wrapped in `**`.
pub fn render_text(tables: &[Table]) -> String {
    let mut out = String::new();
    for t in tables {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("dataset/model".to_string()).chain(t.columns.iter().cloned()).collect()];
        for r in &t.rows {
            grid.push(
                std::iter::once(format!("{}/{}", r.dataset, r.model))
                    .chain(r.cells.iter().map(fmt_cell))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
            .collect();
        let _ = writeln!(out, "{}", t.title);
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            let _ = writeln!(out, "  {}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "  {}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct CsvCell<'a> {
    table: &'a str,
    dataset: &'a str,
    model: &'a str,
    column: &'a str,
    mean: f64,
    std: f64,
    bold: bool,
}

pub fn render_csv(tables: &[Table]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tables {
        for r in &t.rows {
            for (col, c) in t.columns.iter().zip(&r.cells) {
                if let Some(c) = c {
                    w.serialize(CsvCell {
                        table: &t.title,
                        dataset: &r.dataset,
                        model: &r.model,
                        column: col,
                        mean: c.stat.mean,
                        std: c.stat.std,
                        bold: c.bold,
                    })?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads `metrics.csv` and `recalibration.csv` (whichever exist) from `dir`.
pub fn load_tables(dir: &Path) -> Result<Vec<Table>, CliError> {
    let mut tables = Vec::new();
    let m = dir.join(METRICS_CSV);
    if m.exists() {
        let rows: Vec<MetricRow> = read_rows(&m)?;
        if !rows.is_empty() {
            tables.extend(metric_tables(&rows));
        }
    }
    let r = dir.join(RECALIBRATION_CSV);
    if r.exists() {
        let rows: Vec<RecalRow> = read_rows(&r)?;
        if !rows.is_empty() {
            tables.push(recal_table(&rows));
        }
    }
    if tables.is_empty() {
        return Err(CliError::Other(format!("no metrics rows found in {}", dir.display())));
    }
    Ok(tables)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}
