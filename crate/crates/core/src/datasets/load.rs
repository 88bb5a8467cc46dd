use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    Semicolon,
    Tab,
    /// Runs of spaces/tabs, as in the classic UCI `.data` files.
    Whitespace,
}

impl Delimiter {
    fn byte(self) -> Option<u8> {
        match self {
            Delimiter::Comma => Some(b','),
            Delimiter::Semicolon => Some(b';'),
            Delimiter::Tab => Some(b'\t'),
            Delimiter::Whitespace => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl Default for TargetColumn {
    fn default() -> Self {
        TargetColumn::Name("last".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub delimiter: Delimiter,
    pub has_header: bool,
    /// Column name, zero-based index, or the name `"last"`.
    pub target: TargetColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: Delimiter::Comma,
            has_header: true,
            target: TargetColumn::default(),
        }
    }
}

fn parse_rows(path: &Path, opts: &CsvOptions) -> Result<(Option<Vec<String>>, Vec<Vec<String>>)> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    match opts.delimiter.byte() {
        Some(b) => {
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(b)
                .has_headers(opts.has_header)
                .trim(csv::Trim::All)
                .from_reader(file);
            let header = if opts.has_header {
                let h = rdr.headers().map_err(|e| data_err(path, e.to_string()))?;
                Some(h.iter().map(str::to_string).collect())
            } else {
                None
            };
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| data_err(path, e.to_string()))?;
                rows.push(rec.iter().map(str::to_string).collect());
            }
            Ok((header, rows))
        }
        None => {
            let mut lines = BufReader::new(file).lines();
            let mut header = None;
            let mut rows = Vec::new();
            if opts.has_header {
                if let Some(line) = lines.next() {
                    header = Some(line.map_err(io_err)?.split_whitespace().map(str::to_string).collect());
                }
            }
            for line in lines {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                rows.push(line.split_whitespace().map(str::to_string).collect());
            }
            Ok((header, rows))
        }
    }
}

fn data_err(path: &Path, msg: String) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        msg,
    }
}

/// Loads an all-numeric delimited file; every non-target column becomes a
/// feature.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let (header, rows) = parse_rows(path, opts)?;
    let width = match (&header, rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some(r)) => r.len(),
        (None, None) => return Err(data_err(path, "no data rows".into())),
    };
    if width < 2 {
        return Err(data_err(path, format!("need at least two columns, found {width}")));
    }
    let names: Vec<String> = header.unwrap_or_else(|| (0..width).map(|j| format!("col{j}")).collect());
    let target = match &opts.target {
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => return Err(data_err(path, format!("target column index {i} out of range ({width} columns)"))),
        TargetColumn::Name(n) if n == "last" && !names.iter().any(|c| c == "last") => width - 1,
        TargetColumn::Name(n) => names
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| data_err(path, format!("target column {n:?} not found")))?,
    };

    let first_data_line = if opts.has_header { 2 } else { 1 };
    let mut features = Vec::with_capacity(rows.len() * (width - 1));
    let mut targets = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(data_err(
                path,
                format!("line {}: expected {width} columns, found {}", r + first_data_line, row.len()),
            ));
        }
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                data_err(
                    path,
                    format!("line {}, column {} ({}): non-numeric cell {cell:?}", r + first_data_line, j + 1, names[j]),
                )
            })?;
            if j == target {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if targets.is_empty() {
        return Err(data_err(path, "no data rows".into()));
    }
    let feature_names = names.iter().enumerate().filter(|(j, _)| *j != target).map(|(_, n)| n.clone()).collect();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string();
    Dataset::new(stem, features, targets, feature_names)
}
