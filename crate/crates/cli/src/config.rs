//! TOML experiment configuration.
//!
//! Every field has a default, so the smallest useful file is
//!
//! ```toml
//! [dataset]
//! name = "boston"
//! ```
//!
//! Schema (all keys optional):
//!
//! ```toml
//! out_dir = "results"
//! model = "mc_dropout"          # or "ensemble"
//! mc_passes = 10
//! lambdas = [0, 1, 5, 10, 20]   # used by `sweep`
//! calib_split = "train"         # or "holdout"
//! holdout_fraction = 0.2
//! desk_scale = false
//!
//! [dataset]
//! name = "synth_hetero"         # builtin generator or shipped descriptor name
//! descriptor = "datasets/boston.toml"
//! path = "data/my.csv"          # raw CSV; see the csv options below
//! delimiter = "comma"           # comma | semicolon | tab | whitespace
//! has_header = true
//! target = "last"               # column name or zero-based index
//! n = 2000                      # rows drawn by synthetic generators
//! seed = 0
//! max_rows = 5000               # optional seeded subsample
//!
//! [train]      # lambda, learning_rate, batch_size, epochs, dropout_rate, seed, tau, hidden
//! [ensemble]   # size, adv_eps_scale
//! [metrics]    # bins, percent
//! [splits]     # n_splits, test_fraction, seed
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qrcal::datasets::{CsvOptions, SplitSpec};
use qrcal::{EnsembleConfig, MetricConfig, TrainConfig};

use crate::error::CliError;

/// Epoch cap applied by the desk-scale preset.
pub const DESK_EPOCHS: usize = 50;
/// Row cap applied by the desk-scale preset.
pub const DESK_MAX_ROWS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    McDropout,
    Ensemble,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::McDropout => "mc_dropout",
            ModelKind::Ensemble => "ensemble",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibSplit {
    /// Fit the recalibration map on the rows the model was trained on.
    Train,
    /// Hold out part of the training rows, train on the rest, fit the map
    /// on the held-out part.
    Holdout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub name: Option<String>,
    pub descriptor: Option<PathBuf>,
    pub path: Option<PathBuf>,
    #[serde(flatten)]
    pub csv: CsvOptions,
    pub n: usize,
    pub seed: u64,
    pub max_rows: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: None,
            descriptor: None,
            path: None,
            csv: CsvOptions::default(),
            n: 2000,
            seed: 0,
            max_rows: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub metrics: MetricConfig,
    pub splits: SplitSpec,
    pub mc_passes: usize,
    pub lambdas: Vec<f64>,
    pub out_dir: PathBuf,
    pub calib_split: CalibSplit,
    pub holdout_fraction: f64,
    pub desk_scale: bool,
    /// Directory searched for `<name>.toml` descriptors.
    pub descriptor_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            model: ModelKind::McDropout,
            train: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            metrics: MetricConfig::default(),
            splits: SplitSpec::default(),
            mc_passes: qrcal::models::DEFAULT_MC_PASSES,
            lambdas: vec![0.0, 1.0, 5.0, 10.0, 20.0],
            out_dir: PathBuf::from("results"),
            calib_split: CalibSplit::Train,
            holdout_fraction: 0.2,
            desk_scale: false,
            descriptor_dir: PathBuf::from("datasets"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        // relative dataset paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset.descriptor, &mut cfg.dataset.path].into_iter().flatten() {
            if p.is_relative() && base.join(&*p).exists() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Caps epochs and dataset size for quick runs.
    pub fn apply_desk_scale(&mut self) {
        self.desk_scale = true;
        self.train.epochs = self.train.epochs.min(DESK_EPOCHS);
        self.dataset.max_rows = Some(self.dataset.max_rows.map_or(DESK_MAX_ROWS, |m| m.min(DESK_MAX_ROWS)));
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ensemble.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.metrics.bins == 0 {
            return bad("metrics.bins must be at least 1".into());
        }
        if self.mc_passes == 0 {
            return bad("mc_passes must be at least 1".into());
        }
        if self.splits.n_splits == 0 || !(self.splits.test_fraction > 0.0 && self.splits.test_fraction < 1.0) {
            return bad("splits: need n_splits >= 1 and test_fraction in (0, 1)".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!("holdout_fraction must lie in (0, 1), got {}", self.holdout_fraction));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("lambdas must be finite and nonnegative, got {l}"));
        }
        Ok(())
    }

    /// Short name used in file names and CSV rows.
    pub fn dataset_label(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        let from_path = |p: &PathBuf| p.file_stem().and_then(|s| s.to_str()).map(str::to_string);
        self.dataset
            .descriptor
            .as_ref()
            .and_then(from_path)
            .or_else(|| self.dataset.path.as_ref().and_then(from_path))
            .unwrap_or_else(|| "data".into())
    }
}
