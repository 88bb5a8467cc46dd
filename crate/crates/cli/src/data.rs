//! Dataset descriptors and resolution of the `[dataset]` config section.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use qrcal::datasets::{load_csv, synth_hetero, synth_linear, CsvOptions, Dataset};

use crate::config::DatasetConfig;
use crate::error::CliError;

/// Small manifest describing where a benchmark file lives and what shape it
/// should have once loaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub title: String,
    pub url: String,
    /// Relative paths resolve against the descriptor's directory.
    pub path: PathBuf,
    #[serde(flatten)]
    pub csv: CsvOptions,
    pub expected_rows: usize,
    pub expected_features: usize,
}

impl DatasetDescriptor {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingData(path.to_path_buf()),
            _ => CliError::Config(format!("{}: {e}", path.display())),
        })?;
        let mut d: DatasetDescriptor =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if d.path.is_relative() {
            d.path = path.parent().unwrap_or(Path::new(".")).join(&d.path);
        }
        Ok(d)
    }

    /// Loads the data file and checks it against the expected shape.
    pub fn read(&self) -> Result<Dataset, CliError> {
        if !self.path.exists() {
            return Err(CliError::MissingData(self.path.clone()));
        }
        let mut data = load_csv(&self.path, &self.csv).map_err(CliError::run(format!("loading {}", self.name)))?;
        data.name = self.name.clone();
        let got = data.shape();
        if got != (self.expected_rows, self.expected_features) {
            return Err(CliError::Other(format!(
                "{}: loaded shape {:?}, descriptor expects ({}, {})",
                self.path.display(),
                got,
                self.expected_rows,
                self.expected_features
            )));
        }
        Ok(data)
    }
}

pub const SYNTHETIC: [&str; 2] = ["synth_hetero", "synth_linear"];

/// Turns the config section into a dataset. Lookup order: builtin synthetic
/// name, explicit descriptor, explicit CSV path, `<descriptor_dir>/<name>.toml`.
pub fn resolve(cfg: &DatasetConfig, descriptor_dir: &Path) -> Result<Dataset, CliError> {
    let data = match (&cfg.name, &cfg.descriptor, &cfg.path) {
        (Some(n), None, None) if n == "synth_hetero" => synth_hetero(cfg.n, cfg.seed).data,
        (Some(n), None, None) if n == "synth_linear" => synth_linear(cfg.n, cfg.seed),
        (_, Some(d), _) => DatasetDescriptor::load(d)?.read()?,
        (name, None, Some(p)) => {
            if !p.exists() {
                return Err(CliError::MissingData(p.clone()));
            }
            let mut d = load_csv(p, &cfg.csv).map_err(CliError::run(format!("loading {}", p.display())))?;
            if let Some(n) = name {
                d.name = n.clone();
            }
            d
        }
        (Some(n), None, None) => DatasetDescriptor::load(&descriptor_dir.join(format!("{n}.toml")))?.read()?,
        (None, None, None) => return Err(CliError::Config("no dataset given (set [dataset] name, descriptor or path)".into())),
    };
    Ok(match cfg.max_rows {
        Some(m) if data.len() > m => subsample(&data, m, cfg.seed),
        _ => data,
    })
}

/// Seeded subset of `m` rows kept in their original order.
pub fn subsample(data: &Dataset, m: usize, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    idx.truncate(m);
    idx.sort_unstable();
    data.subset(&idx)
}

/// Interprets a `--dataset` argument: `*.toml` is a descriptor, anything
/// that looks like a file path is raw CSV, otherwise a name.
pub fn apply_dataset_arg(cfg: &mut DatasetConfig, arg: &str) {
    let p = PathBuf::from(arg);
    cfg.name = None;
    cfg.descriptor = None;
    cfg.path = None;
    if arg.ends_with(".toml") {
        cfg.descriptor = Some(p);
    } else if arg.contains(std::path::MAIN_SEPARATOR) || p.extension().is_some() || p.exists() {
        cfg.path = Some(p);
    } else {
        cfg.name = Some(arg.to_string());
    }
}
